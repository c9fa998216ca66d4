"""Binary ranking and thresholding metrics for fraud-style evaluation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dataio import DataError

DEFAULT_RATES = (0.0001, 0.001, 0.01)


def _check(scores, labels, need_negatives=True):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise DataError(f"{s.size} scores but {y.size} labels")
    if np.isnan(s).any():
        raise DataError("NaN score")
    n_pos = int(np.count_nonzero(y == 1))
    if n_pos == 0 or (need_negatives and n_pos == y.size):
        raise DataError("metric needs both classes present" if need_negatives
                        else "metric needs at least one positive")
    return s, (y == 1)


def _cuts(s, pos):
    """Cumulative (TP, FP) after each distinct score, highest score first,
    plus the distinct thresholds themselves."""
    order = np.argsort(-s, kind="stable")
    ss, pp = s[order], pos[order]
    tp = np.cumsum(pp)
    fp = np.cumsum(~pp)
    last = np.r_[ss[1:] != ss[:-1], True]
    return tp[last], fp[last], ss[last]


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative; ties
    count one half."""
    s, pos = _check(scores, labels)
    order = np.argsort(s, kind="stable")
    ss = s[order]
    # average 1-based rank over tie groups
    starts = np.flatnonzero(np.r_[True, ss[1:] != ss[:-1]])
    ends = np.r_[starts[1:], ss.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(ss.size)
    ranks[order] = np.repeat(avg, ends - starts)
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1(scores, labels, threshold: float = 0.5) -> float:
    s, pos = _check(scores, labels)
    pred = s >= threshold
    tp = int(np.count_nonzero(pred & pos))
    fp = int(np.count_nonzero(pred & ~pos))
    fn = int(np.count_nonzero(~pred & pos))
    if tp + fp == 0:
        return 0.0
    return 2.0 * tp / (2 * tp + fp + fn)


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    s, pos = _check(scores, labels)
    return float(np.mean((s >= threshold) == pos))


def ks(scores, labels) -> float:
    """Largest gap between true- and false-positive rates over thresholds."""
    s, pos = _check(scores, labels)
    tp, fp, _ = _cuts(s, pos)
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    gap = np.abs(tp / n_pos - fp / n_neg)
    return float(max(gap.max(), 0.0))


def interrupt_budget(rate: float, n: int) -> int:
    """Rows interrupted at ``rate``: ``ceil(rate * n)``, computed on the
    decimal value of ``rate`` so 0.07 * 100 is 7, not 8."""
    if not 0 < rate <= 1:
        raise DataError(f"rate must lie in (0, 1], got {rate}")
    return min(n, math.ceil(Fraction(repr(float(rate))) * n))


def recall_at_rate(scores, labels, rate: float) -> float:
    """Share of positives among the ``ceil(rate * n)`` highest scores.

    Score ties are broken by lower row index.
    """
    s, pos = _check(scores, labels, need_negatives=False)
    budget = interrupt_budget(rate, s.size)
    top = np.argsort(-s, kind="stable")[:budget]
    return float(np.count_nonzero(pos[top]) / np.count_nonzero(pos))


def pr_curve(scores, labels) -> list[tuple[float, float, float]]:
    """(recall, precision, threshold) at each distinct score, descending."""
    s, pos = _check(scores, labels, need_negatives=False)
    tp, fp, thr = _cuts(s, pos)
    n_pos = int(pos.sum())
    recall = tp / n_pos
    precision = tp / (tp + fp)
    return list(zip(recall.tolist(), precision.tolist(), thr.tolist()))


def write_pr_csv(points, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["recall", "precision", "threshold"])
        for r, p, t in points:
            out.writerow([repr(r), repr(p), repr(t)])


@dataclass
class MetricReport:
    auc: float
    f1: float
    ks: float
    recall_at: dict[float, float] = field(default_factory=dict)
    pr_points: list[tuple[float, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"auc": self.auc, "f1": self.f1, "ks": self.ks,
                "recall_at": {repr(k): v for k, v in self.recall_at.items()}}


def evaluate(scores, labels, rates=DEFAULT_RATES, threshold: float = 0.5) -> MetricReport:
    return MetricReport(
        auc=auc(scores, labels),
        f1=f1(scores, labels, threshold),
        ks=ks(scores, labels),
        recall_at={r: recall_at_rate(scores, labels, r) for r in rates},
        pr_points=pr_curve(scores, labels),
    )


METRICS = {"auc": auc, "f1": f1, "ks": ks, "accuracy": accuracy}
