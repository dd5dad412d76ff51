"""Parallel text, gold alignments and invertible subword tokenization."""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

CONTINUATION = "##"

PAD, UNK, CLS, SEP, MARK_OPEN, MARK_CLOSE = range(6)
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[M]", "[/M]")


class CorpusError(ValueError):
    """Malformed corpus or alignment input."""


@dataclass(frozen=True)
class WordSequence:
    words: tuple[str, ...]
    raw: str = ""

    def __post_init__(self):
        for w in self.words:
            if not w or any(c.isspace() for c in w):
                raise CorpusError(f"invalid word {w!r}")

    @classmethod
    def from_text(cls, text: str) -> "WordSequence":
        return cls(tuple(text.split()), text)

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "WordSequence":
        words = tuple(words)
        return cls(words, " ".join(words))

    def __len__(self):
        return len(self.words)

    def __eq__(self, other):
        # `raw` is informational; equality is over the word sequence
        if not isinstance(other, WordSequence):
            return NotImplemented
        return self.words == other.words

    def __hash__(self):
        return hash(self.words)


@dataclass(frozen=True)
class GoldAlignment:
    sure: frozenset = frozenset()
    possible: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "sure", frozenset(self.sure))
        object.__setattr__(self, "possible", frozenset(self.possible) | self.sure)

    def check_bounds(self, n_src: int, n_tgt: int) -> None:
        for i, j in self.possible:
            if not (0 <= i < n_src and 0 <= j < n_tgt):
                raise CorpusError(
                    f"alignment pair {i}-{j} out of bounds for {n_src}x{n_tgt} pair"
                )


@dataclass(frozen=True)
class SentencePair:
    source: WordSequence
    target: WordSequence
    gold: GoldAlignment | None = None

    def __post_init__(self):
        if self.gold is not None:
            self.gold.check_bounds(len(self.source), len(self.target))


def parse_pharaoh(line: str) -> GoldAlignment:
    """Parse ``i-j`` (sure) and ``ipj`` (possible-only) tokens."""
    sure, possible = set(), set()
    for tok in line.split():
        if "-" in tok:
            left, _, right = tok.partition("-")
            dest = sure
        elif "p" in tok:
            left, _, right = tok.partition("p")
            dest = possible
        else:
            raise CorpusError(f"missing separator in alignment token {tok!r}")
        if not (left.isdigit() and right.isdigit()):
            raise CorpusError(f"non-integer index in alignment token {tok!r}")
        dest.add((int(left), int(right)))
    return GoldAlignment(frozenset(sure), frozenset(possible | sure))


def format_pharaoh(g: GoldAlignment) -> str:
    parts = []
    for i, j in sorted(g.possible):
        sep = "-" if (i, j) in g.sure else "p"
        parts.append(f"{i}{sep}{j}")
    return " ".join(parts)


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8", newline="\n") as f:
        text = f.read()
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


def parse_parallel_corpus(src_path, tgt_path, align_path=None) -> list[SentencePair]:
    src = read_lines(src_path)
    tgt = read_lines(tgt_path)
    if len(src) != len(tgt):
        raise CorpusError(
            f"line count mismatch: {src_path} has {len(src)}, {tgt_path} has {len(tgt)}"
        )
    aligns = None
    if align_path is not None:
        aligns = read_lines(align_path)
        if len(aligns) != len(src):
            raise CorpusError(
                f"line count mismatch: {align_path} has {len(aligns)}, expected {len(src)}"
            )
    pairs = []
    for n, (s, t) in enumerate(zip(src, tgt), start=1):
        if not s.strip() or not t.strip():
            raise CorpusError(f"line {n}: empty line")
        gold = None
        if aligns is not None:
            try:
                gold = parse_pharaoh(aligns[n - 1])
            except CorpusError as e:
                raise CorpusError(f"line {n}: {e}") from None
        try:
            pairs.append(
                SentencePair(WordSequence.from_text(s), WordSequence.from_text(t), gold)
            )
        except CorpusError as e:
            raise CorpusError(f"line {n}: {e}") from None
    return pairs


def write_parallel_corpus(pairs: Sequence[SentencePair], prefix) -> None:
    """Write ``prefix.src``, ``prefix.tgt`` and, when gold exists, ``prefix.align``."""
    prefix = os.fspath(prefix)
    atomic_write_text(prefix + ".src", "".join(" ".join(p.source.words) + "\n" for p in pairs))
    atomic_write_text(prefix + ".tgt", "".join(" ".join(p.target.words) + "\n" for p in pairs))
    if pairs and all(p.gold is not None for p in pairs):
        atomic_write_text(prefix + ".align", "".join(format_pharaoh(p.gold) + "\n" for p in pairs))


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# subword vocabulary


@dataclass(frozen=True)
class SubwordVocabulary:
    entries: dict = field(default_factory=dict)
    continuation_marker: str = CONTINUATION

    def __post_init__(self):
        ids = sorted(self.entries.values())
        if ids != list(range(len(ids))):
            raise CorpusError("vocabulary ids must be dense")
        for k, tok in enumerate(SPECIAL_TOKENS):
            if self.entries.get(tok) != k:
                raise CorpusError(f"special token {tok} must have id {k}")
        object.__setattr__(
            self, "_by_id", sorted(self.entries, key=self.entries.__getitem__)
        )
        object.__setattr__(
            self,
            "_max_piece",
            max((len(t) for t in self.entries if t not in SPECIAL_TOKENS), default=1),
        )

    @classmethod
    def from_pieces(cls, pieces: Iterable[str]) -> "SubwordVocabulary":
        entries = {tok: k for k, tok in enumerate(SPECIAL_TOKENS)}
        for p in pieces:
            if p not in entries:
                entries[p] = len(entries)
        return cls(entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, piece):
        return piece in self.entries

    @property
    def tokens(self) -> list[str]:
        return list(self._by_id)

    def token(self, idx: int) -> str:
        return self._by_id[idx]

    def dumps(self) -> str:
        return "".join(f"{tok}\t{k}\n" for k, tok in enumerate(self._by_id))

    @classmethod
    def loads(cls, text: str) -> "SubwordVocabulary":
        entries = {}
        for n, line in enumerate(text.splitlines(), start=1):
            tok, sep, idx = line.rpartition("\t")
            if not sep or not idx.isdigit():
                raise CorpusError(f"vocabulary line {n}: expected token<TAB>id")
            entries[tok] = int(idx)
        return cls(entries)

    def save(self, path) -> None:
        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path) -> "SubwordVocabulary":
        with open(path, encoding="utf-8") as f:
            return cls.loads(f.read())


def _corpus_words(corpus) -> Counter:
    counts: Counter = Counter()
    for item in corpus:
        if isinstance(item, SentencePair):
            counts.update(item.source.words)
            counts.update(item.target.words)
        elif isinstance(item, WordSequence):
            counts.update(item.words)
        else:
            counts.update(str(item).split())
    return counts


def train_subword_vocab(corpus, target_size: int, seed: int = 0) -> SubwordVocabulary:
    """Learn BPE-style merges until the vocabulary reaches ``target_size``.

    ``corpus`` may hold SentencePairs, WordSequences or raw text lines. The
    procedure has no random choices: the most frequent adjacent pair wins and
    ties go to the lexicographically smallest merged string, so ``seed`` only
    exists for interface symmetry with the other trainers.
    """
    del seed
    word_counts = _corpus_words(corpus)
    chars = sorted({c for w in word_counts for c in w})
    if target_size < len(chars) + len(SPECIAL_TOKENS):
        raise CorpusError(
            f"target_size {target_size} too small: need at least "
            f"{len(chars) + len(SPECIAL_TOKENS)} for {len(chars)} characters + specials"
        )
    pieces = list(chars)
    known = set(SPECIAL_TOKENS) | set(chars)
    # words as mutable symbol lists
    words = [(list(w), c) for w, c in sorted(word_counts.items())]
    while len(known) < target_size:
        pair_counts: Counter = Counter()
        for syms, c in words:
            for a, b in zip(syms, syms[1:]):
                pair_counts[(a, b)] += c
        if not pair_counts:
            break
        best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0][0] + kv[0][1], kv[0]))
        (a, b), _ = best
        merged = a + b
        for syms, _c in words:
            i = 0
            while i < len(syms) - 1:
                if syms[i] == a and syms[i + 1] == b:
                    syms[i : i + 2] = [merged]
                i += 1
        if merged not in known:
            known.add(merged)
            pieces.append(merged)
    return SubwordVocabulary.from_pieces(pieces)


# ---------------------------------------------------------------------------
# tokenization


@dataclass(frozen=True)
class WordTokenMap:
    spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pos = 0
        for start, end in self.spans:
            if start != pos or end <= start:
                raise CorpusError(f"spans do not partition the tokens: {self.spans}")
            pos = end

    @property
    def n_tokens(self) -> int:
        return self.spans[-1][1] if self.spans else 0

    def token_words(self) -> list[int]:
        out = []
        for w, (start, end) in enumerate(self.spans):
            out.extend([w] * (end - start))
        return out


@dataclass(frozen=True)
class SubwordTokenization:
    token_ids: tuple[int, ...]
    token_strings: tuple[str, ...]
    word_index: tuple[int, ...]
    unk_positions: tuple[int, ...] = ()

    def __len__(self):
        return len(self.token_ids)

    def word_map(self) -> WordTokenMap:
        spans = []
        for k, w in enumerate(self.word_index):
            if w == len(spans):
                spans.append([k, k + 1])
            elif w == len(spans) - 1:
                spans[-1][1] = k + 1
            else:
                raise CorpusError("word_index is not a contiguous monotone run")
        return WordTokenMap(tuple(map(tuple, spans)))


def _segment(word: str, v: SubwordVocabulary) -> list[tuple[str, int]]:
    out = []
    i = 0
    while i < len(word):
        for j in range(min(len(word), i + v._max_piece), i, -1):
            piece = word[i:j]
            if piece in v.entries and piece not in SPECIAL_TOKENS:
                out.append((piece, v.entries[piece]))
                i = j
                break
        else:
            out.append((SPECIAL_TOKENS[UNK], UNK))
            i += 1
    return out


def tokenize(ws: WordSequence, v: SubwordVocabulary):
    """Greedy longest-match segmentation; returns (tokenization, word map)."""
    ids, strings, word_index, unks = [], [], [], []
    for w, word in enumerate(ws.words):
        for k, (piece, idx) in enumerate(_segment(word, v)):
            if idx == UNK:
                unks.append(len(ids))
            ids.append(idx)
            strings.append(piece if k == 0 else v.continuation_marker + piece)
            word_index.append(w)
    tok = SubwordTokenization(tuple(ids), tuple(strings), tuple(word_index), tuple(unks))
    return tok, tok.word_map()


def detokenize(t: SubwordTokenization) -> WordSequence:
    if t.unk_positions or UNK in t.token_ids:
        raise CorpusError("cannot detokenize: UNK tokens present")
    words: list[str] = []
    for k, (s, w) in enumerate(zip(t.token_strings, t.word_index)):
        if w == len(words):
            words.append(s)
        else:
            if not s.startswith(CONTINUATION):
                raise CorpusError(f"token {k} ({s!r}) lacks continuation marker")
            words[-1] += s[len(CONTINUATION):]
    return WordSequence.from_words(words)
