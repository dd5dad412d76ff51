"""Training examples from gold alignments and the mini-batch Adam loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .aligner import AggregationKind, Direction, SymmetrizationKind, TokenizedPair, align_corpus
from .corpus import GoldAlignment, SentencePair, SubwordVocabulary, WordTokenMap
from .encoder import (
    Checkpoint,
    EncodedInput,
    ModelConfig,
    SequenceTooLong,
    cast_params,
    encode_input,
    loss_and_grad,
)
from .metrics import evaluate_corpus
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-3
    batch_size: int = 8
    epochs: int = 5
    threshold: float = 0.5
    seed: int = 0
    few_shot_k: int | None = None

    def __post_init__(self):
        if self.lr < 0 or self.batch_size <= 0 or self.epochs < 0:
            raise ValueError("lr, batch_size and epochs must be non-negative (batch_size > 0)")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.few_shot_k is not None and self.few_shot_k <= 0:
            raise ValueError("few_shot_k must be positive")


@dataclass(frozen=True)
class TrainingExample:
    encoded: EncodedInput
    labels: np.ndarray
    origin: tuple  # (pair index, direction, word index)


def derive_labels(gold: GoldAlignment, direction: Direction, word: int, other_map: WordTokenMap) -> np.ndarray:
    """Token k is 1 iff its word is sure-aligned to the marked word."""
    if gold is None:
        raise TrainingError("labels require a gold alignment")
    labels = np.zeros(other_map.n_tokens)
    for i, j in gold.sure:
        if direction is Direction.FORWARD and i == word:
            start, end = other_map.spans[j]
        elif direction is Direction.REVERSE and j == word:
            start, end = other_map.spans[i]
        else:
            continue
        labels[start:end] = 1.0
    return labels


def build_examples(corpus: Sequence[SentencePair], vocab: SubwordVocabulary, max_len: int):
    """One example per source word (forward) and per target word (reverse).

    Returns ``(examples, n_skipped)``; overlong inputs are skipped.
    """
    examples, skipped = [], 0
    for idx, pair in enumerate(corpus):
        if pair.gold is None:
            raise TrainingError(f"pair {idx} has no gold alignment")
        tp = TokenizedPair.of(pair, vocab)
        for direction in (Direction.FORWARD, Direction.REVERSE):
            marked, marked_map, other, other_map = tp.sides(direction)
            for w in range(len(marked_map.spans)):
                try:
                    enc = encode_input(marked.token_ids, w, marked_map, other.token_ids, max_len)
                except SequenceTooLong:
                    skipped += 1
                    continue
                labels = derive_labels(pair.gold, direction, w, other_map)
                examples.append(TrainingExample(enc, labels, (idx, direction, w)))
    if skipped:
        log.warning("skipped %d overlong examples", skipped)
    return examples, skipped


def few_shot_subset(corpus: Sequence, k: int, seed: int) -> list:
    """Uniform sample of ``k`` pairs without replacement, in corpus order."""
    if k > len(corpus):
        raise ValueError(f"few-shot k={k} exceeds corpus size {len(corpus)}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(corpus), size=k, replace=False))
    return [corpus[i] for i in idx]


@dataclass
class TrainResult:
    final: Checkpoint
    best: Checkpoint
    history: list = field(default_factory=list)


def _as_checkpoint(init, vocab, model_config) -> Checkpoint:
    if isinstance(init, Checkpoint):
        return init
    if vocab is None or model_config is None:
        raise TrainingError("bare parameters need vocab and model_config")
    return Checkpoint(model_config, init, vocab, {"epochs_seen": 0})


def train(
    corpus: Sequence[SentencePair],
    cfg: TrainConfig,
    init,
    val: Sequence[SentencePair] | None = None,
    vocab: SubwordVocabulary | None = None,
    model_config: ModelConfig | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Shuffled mini-batch Adam on token-level BCE over both directions.

    ``init`` is a Checkpoint (continue from pre-training) or a parameter dict
    (fresh model; pass ``vocab`` and ``model_config``).
    """
    start = _as_checkpoint(init, vocab, model_config)
    if cfg.epochs == 0:
        return TrainResult(start, start, [])
    if cfg.few_shot_k is not None:
        corpus = few_shot_subset(corpus, cfg.few_shot_k, cfg.seed)
    mcfg = start.config
    examples, _ = build_examples(corpus, start.vocab, mcfg.max_len)
    if not examples:
        raise TrainingError("no training examples")

    params = {k: np.array(v) for k, v in start.params.items()}
    state = AdamState.zeros_like(params)
    order_rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng([cfg.seed, 1]) if mcfg.dropout_rate > 0 else None
    epochs_before = start.meta.get("epochs_seen", 0)

    def snapshot(ep):
        meta = dict(start.meta, epochs_seen=epochs_before + ep, seed=cfg.seed)
        return Checkpoint(mcfg, cast_params(params, np.float32), start.vocab, meta)

    history, best, best_aer = [], None, None
    for epoch in range(1, cfg.epochs + 1):
        perm = order_rng.permutation(len(examples))
        losses = []
        for b, lo in enumerate(range(0, len(perm), cfg.batch_size)):
            chunk = [examples[i] for i in perm[lo : lo + cfg.batch_size]]
            loss, grads = loss_and_grad(
                [e.encoded for e in chunk], [e.labels for e in chunk], params, mcfg, rng=drop_rng
            )
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            try:
                params, state = adam_step(params, grads, state, cfg.lr)
            except FloatingPointError as e:
                raise TrainingError(f"epoch {epoch}, batch {b}: {e}") from None
            losses.append(loss)
        record = {"epoch": epoch, "mean_loss": float(np.mean(losses))}
        current = snapshot(epoch)
        if val:
            hyps = align_corpus(
                val,
                current,
                AggregationKind.MAX,
                SymmetrizationKind.PROB_AVERAGE,
                cfg.threshold,
            )
            record["val_aer"] = evaluate_corpus(hyps, [p.gold for p in val]).aer
            if best_aer is None or record["val_aer"] < best_aer:
                best, best_aer = current, record["val_aer"]
        log.info("epoch %d: %s", epoch, record)
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
    final = snapshot(cfg.epochs)
    return TrainResult(final, best if best is not None else final, history)
