"""Synthetic parallel corpora with exact gold alignments.

A "language" is a dictionary from source word types to one or two words of a
shared pivot target language (so different dictionary seeds behave like
X-English pairs). Each source type is assigned one behaviour up front:
one-to-one, contiguous one-to-two, non-contiguous one-to-two, or dropped.
Sentences are uniform draws of distinct types, locally reordered, with
optional spurious target words.
"""

from __future__ import annotations

import json
from functools import lru_cache
from collections import Counter
from dataclasses import asdict, dataclass, fields

import numpy as np

from .corpus import GoldAlignment, SentencePair, WordSequence

CONSONANTS = "bcdfghjklmnpqrstvwxz"
VOWELS = "aeiou"
PIVOT_VOWELS = "aeiouéà"
N_FUNCTION_WORDS = 12
PIVOT_SEED = 9090


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    vocab_size: int = 200
    dict_seed: int = 0
    fertility_rate: float = 0.0
    noncontig_rate: float = 0.0
    drop_rate: float = 0.0
    insert_rate: float = 0.0
    shuffle_window: int = 0
    n_sentences: int = 100
    len_range: tuple = (3, 10)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "len_range", tuple(self.len_range))
        rates = (self.fertility_rate, self.noncontig_rate, self.drop_rate, self.insert_rate)
        if any(not 0.0 <= r <= 0.5 for r in rates):
            raise SynthError("all rates must lie in [0, 0.5]")
        if sum(rates) > 0.9:
            raise SynthError(f"rates sum to {sum(rates):.3f} > 0.9")
        lo, hi = self.len_range
        if lo < 1 or hi < lo:
            raise SynthError(f"invalid len_range {self.len_range}")
        if hi > self.vocab_size:
            raise SynthError("sentences draw distinct types: len_range max exceeds vocab_size")
        if self.vocab_size < 1 or self.n_sentences < 0 or self.shuffle_window < 0:
            raise SynthError("vocab_size, n_sentences and shuffle_window must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SynthError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["len_range"] = list(self.len_range)
        return d


@lru_cache(maxsize=None)
def _syllables(seed: int, n: int, codas: str = "") -> tuple[str, ...]:
    vowels = PIVOT_VOWELS if codas else VOWELS
    pool = [c + v + k for c in CONSONANTS for v in vowels for k in (codas or [""])]
    rng = np.random.default_rng(seed)
    return tuple(pool[i] for i in rng.choice(len(pool), size=n, replace=False))


def _spell(index: int, syllables, min_len: int = 2) -> str:
    base = len(syllables)
    digits = []
    while index or len(digits) < min_len:
        index, r = divmod(index, base)
        digits.append(r)
    return "".join(syllables[d] for d in reversed(digits))


def pivot_word(index: int) -> str:
    sylls = _syllables(PIVOT_SEED, 20, codas="nr")
    if index < N_FUNCTION_WORDS:
        return sylls[index]
    return _spell(index - N_FUNCTION_WORDS, sylls)


@dataclass(frozen=True)
class Dictionary:
    source_words: list
    kinds: list  # per source type: "one", "contig", "noncontig", "drop"
    targets: list  # per source type: tuple of pivot ids

    @classmethod
    def build(cls, spec: SynthSpec) -> "Dictionary":
        V = spec.vocab_size
        rng = np.random.default_rng([spec.dict_seed, 1])
        sylls = _syllables(spec.dict_seed * 7919 + 17, 20)
        words = [_spell(t, sylls) for t in range(V)]
        order = rng.permutation(V)
        n_nc = round(spec.noncontig_rate * V)
        n_ct = round(spec.fertility_rate * V)
        n_dr = round(spec.drop_rate * V)
        kinds = ["one"] * V
        for k, t in enumerate(order):
            if k < n_nc:
                kinds[t] = "noncontig"
            elif k < n_nc + n_ct:
                kinds[t] = "contig"
            elif k < n_nc + n_ct + n_dr:
                kinds[t] = "drop"
        pivot_ids = N_FUNCTION_WORDS + rng.permutation(2 * V)
        targets, nxt = [], 0
        for t in range(V):
            width = {"one": 1, "contig": 2, "noncontig": 2, "drop": 0}[kinds[t]]
            targets.append(tuple(int(x) for x in pivot_ids[nxt : nxt + width]))
            nxt += width
        return cls(words, kinds, targets)


def _sentence(spec: SynthSpec, dic: Dictionary, idx: int):
    rng = np.random.default_rng([spec.seed, idx])
    lo, hi = spec.len_range
    n = int(rng.integers(lo, hi + 1))
    types = rng.choice(spec.vocab_size, size=n, replace=False)
    realized = Counter()

    # blocks of (pivot id, source index or None); blocks are never split
    blocks, pending = [], []
    for i, t in enumerate(types):
        kind = dic.kinds[t]
        tg = dic.targets[t]
        if kind == "drop":
            realized["drop"] += 1
            continue
        if kind == "noncontig":
            blocks.append([(tg[0], i)])
            pending.append((i, (tg[1], i)))
        else:
            blocks.append([(x, i) for x in tg])
            realized[kind] += 1
    keys = np.arange(len(blocks)) + (
        rng.uniform(0, spec.shuffle_window, size=len(blocks)) if spec.shuffle_window else 0
    )
    order = np.argsort(keys, kind="stable")
    blocks = [blocks[k] for k in order]

    # the second half of a non-contiguous word lands at least one block away
    for src_idx, word in pending:
        head_block = next(p for p, blk in enumerate(blocks) if any(s == src_idx for _, s in blk))
        if head_block + 2 <= len(blocks):
            span = len(blocks) - (head_block + 2)
            pos = head_block + 2 + int(rng.integers(0, min(span, 2) + 1))
            blocks.insert(pos, [word])
        elif head_block >= 1:
            blocks.insert(head_block - 1, [word])
        else:
            fn = int(rng.integers(0, N_FUNCTION_WORDS))
            blocks.insert(head_block + 1, [(fn, None)])
            blocks.insert(head_block + 2, [word])
            realized["insert"] += 1
        realized["noncontig"] += 1

    n_ins = int(rng.binomial(n, spec.insert_rate)) if spec.insert_rate else 0
    for _ in range(n_ins):
        fn = int(rng.integers(0, N_FUNCTION_WORDS))
        blocks.insert(int(rng.integers(0, len(blocks) + 1)), [(fn, None)])
    realized["insert"] += n_ins

    if not blocks:
        blocks.append([(int(rng.integers(0, N_FUNCTION_WORDS)), None)])
        realized["insert"] += 1

    flat = [x for blk in blocks for x in blk]
    sure = {(src, j) for j, (_, src) in enumerate(flat) if src is not None}
    source = WordSequence.from_words(dic.source_words[t] for t in types)
    target = WordSequence.from_words(pivot_word(pid) for pid, _ in flat)
    realized["source_words"] += n
    realized["target_words"] += len(flat)
    return SentencePair(source, target, GoldAlignment(frozenset(sure), frozenset(sure))), realized


def generate(spec: SynthSpec, with_stats: bool = False):
    """Deterministic corpus for ``spec``; gold has S == P."""
    dic = Dictionary.build(spec)
    pairs, stats = [], Counter()
    for idx in range(spec.n_sentences):
        pair, realized = _sentence(spec, dic, idx)
        pairs.append(pair)
        stats.update(realized)
    if with_stats:
        return pairs, dict(stats)
    return pairs


def load_spec_file(path) -> dict[str, SynthSpec]:
    """Read a JSON spec: either plain SynthSpec fields (one corpus named
    ``corpus``) or ``{"base": {...}, "corpora": {name: overrides}}``."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if "corpora" in raw:
        base = SynthSpec.from_dict(raw.get("base", {}))
        return {
            name: SynthSpec.from_dict({**base.to_dict(), **over})
            for name, over in raw["corpora"].items()
        }
    return {"corpus": SynthSpec.from_dict(raw)}
