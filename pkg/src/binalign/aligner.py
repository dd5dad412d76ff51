"""Word alignment inference: per-word token scoring, aggregation, symmetrization."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import SentencePair, SubwordTokenization, WordTokenMap, tokenize
from .encoder import Checkpoint, EncodedInput, SequenceTooLong, encode_input, forward


class Direction(enum.Enum):
    FORWARD = "forward"  # source words marked, target tokens scored
    REVERSE = "reverse"  # target words marked, source tokens scored


class AggregationKind(enum.Enum):
    MAX = "max"
    MEAN = "mean"
    MIN = "min"


class SymmetrizationKind(enum.Enum):
    FORWARD_ONLY = "forward"
    REVERSE_ONLY = "reverse"
    PROB_AVERAGE = "avg"
    INTERSECTION = "intersection"
    UNION = "union"
    BIDI_AVERAGE = "bidi-avg"


@dataclass(frozen=True)
class ScoreMatrix:
    direction: Direction
    probs: np.ndarray  # (n_src_words, n_tgt_words) in either direction

    @property
    def shape(self):
        return self.probs.shape


@dataclass(frozen=True)
class AlignmentHypothesis:
    pairs: frozenset = frozenset()
    scores: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset(self.pairs))


@dataclass(frozen=True)
class TokenizedPair:
    src: SubwordTokenization
    src_map: WordTokenMap
    tgt: SubwordTokenization
    tgt_map: WordTokenMap

    @classmethod
    def of(cls, pair: SentencePair, vocab) -> "TokenizedPair":
        src, src_map = tokenize(pair.source, vocab)
        tgt, tgt_map = tokenize(pair.target, vocab)
        return cls(src, src_map, tgt, tgt_map)

    def sides(self, direction: Direction):
        """(marked tokens, marked map, scored tokens, scored map)."""
        if direction is Direction.FORWARD:
            return self.src, self.src_map, self.tgt, self.tgt_map
        return self.tgt, self.tgt_map, self.src, self.src_map


def encode_word(tp: TokenizedPair, direction: Direction, word: int, max_len: int) -> EncodedInput:
    marked, marked_map, other, _ = tp.sides(direction)
    try:
        return encode_input(marked.token_ids, word, marked_map, other.token_ids, max_len)
    except SequenceTooLong as e:
        raise SequenceTooLong(f"{direction.value} word {word}: {e}") from None


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def token_probs(pair, src_word: int, model: Checkpoint, direction=Direction.FORWARD) -> np.ndarray:
    """p(a_k = 1 | marked word) for every token of the scored side."""
    tp = pair if isinstance(pair, TokenizedPair) else TokenizedPair.of(pair, model.vocab)
    inp = encode_word(tp, direction, src_word, model.config.max_len)
    return sigmoid(forward(inp, model.params, model.config))


def aggregate_word(probs, span, agg: AggregationKind = AggregationKind.MAX) -> float:
    start, end = span
    if not 0 <= start < end <= len(probs):
        raise ValueError(f"empty or out-of-range span {span} for {len(probs)} tokens")
    seg = np.asarray(probs[start:end], dtype=np.float64)
    if agg is AggregationKind.MAX:
        return float(seg.max())
    if agg is AggregationKind.MIN:
        return float(seg.min())
    return float(seg.mean())


def score_matrix(
    pair, model: Checkpoint, direction=Direction.FORWARD, agg=AggregationKind.MAX
) -> ScoreMatrix:
    """One forward pass per word of the marking side, batched."""
    tp = pair if isinstance(pair, TokenizedPair) else TokenizedPair.of(pair, model.vocab)
    _, marked_map, _, other_map = tp.sides(direction)
    inputs = [
        encode_word(tp, direction, w, model.config.max_len)
        for w in range(len(marked_map.spans))
    ]
    logits = forward(inputs, model.params, model.config)
    out = np.empty((len(marked_map.spans), len(other_map.spans)))
    for w, z in enumerate(logits):
        p = sigmoid(z)
        for j, span in enumerate(other_map.spans):
            out[w, j] = aggregate_word(p, span, agg)
    if direction is Direction.REVERSE:
        out = out.T.copy()
    return ScoreMatrix(direction, out)


def symmetrize(
    fwd: ScoreMatrix,
    rev: ScoreMatrix,
    kind: SymmetrizationKind = SymmetrizationKind.PROB_AVERAGE,
    threshold: float = 0.5,
) -> AlignmentHypothesis:
    if fwd.shape != rev.shape:
        raise ValueError(f"score matrices differ in shape: {fwd.shape} vs {rev.shape}")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    f, r = fwd.probs, rev.probs
    avg = (f + r) / 2.0
    score = avg
    if kind is SymmetrizationKind.FORWARD_ONLY:
        keep, score = f >= threshold, f
    elif kind is SymmetrizationKind.REVERSE_ONLY:
        keep, score = r >= threshold, r
    elif kind is SymmetrizationKind.PROB_AVERAGE:
        keep = avg >= threshold
    elif kind is SymmetrizationKind.INTERSECTION:
        keep = (f >= threshold) & (r >= threshold)
    elif kind is SymmetrizationKind.UNION:
        keep = (f >= threshold) | (r >= threshold)
    elif kind is SymmetrizationKind.BIDI_AVERAGE:
        bf = (f >= threshold).astype(float)
        br = (r >= threshold).astype(float)
        keep = (bf + br) / 2.0 >= threshold
    else:
        raise ValueError(f"unknown symmetrization {kind!r}")
    ii, jj = np.nonzero(keep)
    pairs = list(zip(ii.tolist(), jj.tolist()))
    return AlignmentHypothesis(frozenset(pairs), {p: float(score[p]) for p in pairs})


def align_pair(pair, model: Checkpoint, agg=AggregationKind.MAX, kind=SymmetrizationKind.PROB_AVERAGE, threshold=0.5):
    tp = TokenizedPair.of(pair, model.vocab)
    n, m = len(tp.src_map.spans), len(tp.tgt_map.spans)
    need_fwd = kind is not SymmetrizationKind.REVERSE_ONLY
    need_rev = kind is not SymmetrizationKind.FORWARD_ONLY
    fwd = score_matrix(tp, model, Direction.FORWARD, agg) if need_fwd else None
    rev = score_matrix(tp, model, Direction.REVERSE, agg) if need_rev else None
    # unidirectional decoding skips the unused direction
    if fwd is None:
        fwd = ScoreMatrix(Direction.FORWARD, np.zeros((n, m)))
    if rev is None:
        rev = ScoreMatrix(Direction.REVERSE, np.zeros((n, m)))
    return symmetrize(fwd, rev, kind, threshold)


def align_corpus(
    corpus: Sequence[SentencePair],
    model: Checkpoint,
    agg=AggregationKind.MAX,
    kind=SymmetrizationKind.PROB_AVERAGE,
    threshold: float = 0.5,
    jobs: int = 1,
    errors: list | None = None,
) -> list[AlignmentHypothesis]:
    """Align every pair independently; output order follows input order.

    With ``errors`` given, per-sentence failures are appended as
    ``(index, message)`` and yield an empty hypothesis; otherwise they raise.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")

    def one(item):
        idx, pair = item
        try:
            return align_pair(pair, model, agg, kind, threshold)
        except SequenceTooLong as e:
            if errors is None:
                raise
            errors.append((idx, str(e)))
            return AlignmentHypothesis()

    items = list(enumerate(corpus))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(one, items))
    else:
        out = [one(it) for it in items]
    if errors is not None:
        errors.sort()
    return out


def format_hypothesis(h: AlignmentHypothesis) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(h.pairs))


def format_scores(h: AlignmentHypothesis) -> str:
    scores = h.scores or {}
    return " ".join(f"{i}-{j}:{scores.get((i, j), float('nan')):.4f}" for i, j in sorted(h.pairs))
