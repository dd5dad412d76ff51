"""AER, precision/recall/F1 and error stratification."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalCounts:
    h_cap_s: int = 0
    h_cap_p: int = 0
    h: int = 0
    s: int = 0

    @classmethod
    def of(cls, hyp, sure, possible) -> "EvalCounts":
        hyp, sure = set(hyp), set(sure)
        possible = set(possible) | sure
        return cls(len(hyp & sure), len(hyp & possible), len(hyp), len(sure))

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(
            self.h_cap_s + other.h_cap_s,
            self.h_cap_p + other.h_cap_p,
            self.h + other.h,
            self.s + other.s,
        )


def aer(counts: EvalCounts) -> float:
    denom = counts.h + counts.s
    if denom == 0:
        raise MetricError("AER undefined: no predicted and no sure alignments")
    return 1.0 - (counts.h_cap_s + counts.h_cap_p) / denom


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float
    empty_hypothesis: bool = False


def prf(counts: EvalCounts) -> PRF:
    """Precision against P, recall against S. An empty hypothesis gets precision 0."""
    if counts.s == 0:
        raise MetricError("recall undefined: no sure alignments")
    recall = counts.h_cap_s / counts.s
    if counts.h == 0:
        return PRF(0.0, recall, 0.0, True)
    precision = counts.h_cap_p / counts.h
    total = precision + recall
    f1 = 2 * precision * recall / total if total > 0 else 0.0
    return PRF(precision, recall, f1)


@dataclass(frozen=True)
class EvalReport:
    aer: float
    precision: float
    recall: float
    f1: float
    counts: EvalCounts
    n_pairs: int

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def _gold_sets(g):
    return set(g.sure), set(g.possible) | set(g.sure)


def _hyp_set(h):
    return set(getattr(h, "pairs", h))


def evaluate_corpus(hyps: Sequence, golds: Sequence) -> EvalReport:
    """Micro-averaged: counts are summed over pairs before any division."""
    if len(hyps) != len(golds):
        raise MetricError(f"{len(hyps)} hypotheses but {len(golds)} gold alignments")
    total = EvalCounts()
    for h, g in zip(hyps, golds):
        sure, possible = _gold_sets(g)
        total = total + EvalCounts.of(_hyp_set(h), sure, possible)
    p, r, f1, _ = prf(total)
    return EvalReport(aer(total), p, r, f1, total, len(hyps))


# ---------------------------------------------------------------------------
# stratification


class Category(enum.Enum):
    UNTRANSLATED = "untranslated"
    ONE_TO_MANY = "one-to-many"
    ONE_TO_MANY_NONCONTIGUOUS = "one-to-many-noncontiguous"


@dataclass
class CategoryStats:
    occurrences: int = 0
    correct: int = 0

    @property
    def percent(self) -> float:
        return 100.0 * self.correct / self.occurrences if self.occurrences else 0.0


@dataclass
class StratReport:
    stats: dict = field(default_factory=lambda: {c: CategoryStats() for c in Category})

    def __getitem__(self, cat: Category) -> CategoryStats:
        return self.stats[cat]

    def to_dict(self) -> dict:
        return {
            c.value: {"occurrences": s.occurrences, "correct": s.correct, "percent": s.percent}
            for c, s in self.stats.items()
        }

    def table(self) -> str:
        rows = [("Category", "Occurrences", "Correct", "Correct(%)")]
        labels = {
            Category.UNTRANSLATED: "Untranslated words",
            Category.ONE_TO_MANY: "One-to-multiple alignments",
            Category.ONE_TO_MANY_NONCONTIGUOUS: "One-to-multiple non-contiguous words",
        }
        for c in Category:
            s = self.stats[c]
            rows.append((labels[c], str(s.occurrences), str(s.correct), f"{s.percent:.1f}"))
        widths = [max(len(r[k]) for r in rows) for k in range(4)]
        lines = []
        for n, r in enumerate(rows):
            cells = [r[0].ljust(widths[0])] + [r[k].rjust(widths[k]) for k in range(1, 4)]
            lines.append("  ".join(cells).rstrip())
            if n == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def is_contiguous(indices) -> bool:
    idx = sorted(indices)
    return idx[-1] - idx[0] == len(idx) - 1


def word_links(pairs, side: int, n_words: int) -> list[set]:
    """Partner indices per word on ``side`` (0 = source, 1 = target)."""
    links = [set() for _ in range(n_words)]
    for pair in pairs:
        links[pair[side]].add(pair[1 - side])
    return links


def stratify(hyps: Sequence, golds: Sequence, pairs: Sequence) -> StratReport:
    """Count untranslated / one-to-many / non-contiguous words on both sides.

    Categories come from sure links only. A word is correct when its predicted
    partner set equals its gold sure partner set (empty for untranslated words).
    """
    if not len(hyps) == len(golds) == len(pairs):
        raise MetricError("hyps, golds and pairs must have equal length")
    report = StratReport()
    for h, g, pair in zip(hyps, golds, pairs):
        if g is None:
            raise MetricError("stratification requires gold alignments")
        dims = (len(pair.source), len(pair.target))
        hyp = _hyp_set(h)
        for side in (0, 1):
            gold_links = word_links(g.sure, side, dims[side])
            pred_links = word_links(hyp, side, dims[side])
            for gl, pl in zip(gold_links, pred_links):
                if not gl:
                    cats = [Category.UNTRANSLATED]
                elif len(gl) >= 2:
                    cats = [Category.ONE_TO_MANY]
                    if not is_contiguous(gl):
                        cats.append(Category.ONE_TO_MANY_NONCONTIGUOUS)
                else:
                    continue
                for c in cats:
                    report.stats[c].occurrences += 1
                    report.stats[c].correct += pl == gl
    return report
