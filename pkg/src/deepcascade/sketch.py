"""Mergeable weighted quantile summaries and split-candidate generation.

Each entry keeps a retained value ``v`` with three numbers:

* ``rmin``  lower bound on the total weight strictly below ``v``
* ``rmax``  upper bound on the total weight at or below ``v``
* ``wmin``  lower bound on the weight sitting exactly at ``v``

so the weight strictly below ``v`` lies in ``[rmin, rmax - wmin]``. The
summary keeps every such interval, and every gap between neighbouring
entries, no wider than ``2 * eps * total_weight``; rank estimates are
interval midpoints and are therefore off by at most ``eps * total_weight``.
Merging adds the two sides' bounds, which keeps the relative bound, and
pruning only drops an entry when its neighbours still satisfy it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuantileSketch:
    values: np.ndarray
    rmin: np.ndarray
    rmax: np.ndarray
    wmin: np.ndarray
    eps: float
    total_weight: float

    @classmethod
    def empty(cls, eps: float) -> "QuantileSketch":
        z = np.zeros(0)
        return cls(z, z, z, z, float(eps), 0.0)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.wmin

    @property
    def min_rank(self) -> np.ndarray:
        """Lower bound on the weight strictly below each retained value."""
        return self.rmin

    @property
    def max_rank(self) -> np.ndarray:
        """Upper bound on the weight strictly below each retained value."""
        return self.rmax - self.wmin

    @property
    def entries(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.values.tolist(), self.wmin.tolist(),
                        self.min_rank.tolist(), self.max_rank.tolist()))

    def max_gap(self) -> float:
        """Widest rank interval, over entries and between neighbours."""
        if len(self) == 0:
            return 0.0
        own = self.max_rank - self.min_rank
        between = (self.rmax[1:] - self.wmin[1:]) - (self.rmin[:-1] + self.wmin[:-1])
        edges = [self.rmax[0] - self.wmin[0],
                 self.total_weight - (self.rmin[-1] + self.wmin[-1])]
        return float(max(own.max(), between.max(initial=0.0), *edges))

    def rank(self, x: float) -> float:
        """Estimated total weight of values strictly below ``x``."""
        n = len(self)
        if n == 0:
            return 0.0
        i = int(np.searchsorted(self.values, x, side="right")) - 1
        if i >= 0 and self.values[i] == x:
            lo, hi = self.rmin[i], self.rmax[i] - self.wmin[i]
        else:
            lo = 0.0 if i < 0 else self.rmin[i] + self.wmin[i]
            hi = self.total_weight if i + 1 >= n else self.rmax[i + 1] - self.wmin[i + 1]
        return 0.5 * (lo + hi)

    def _rank_le(self) -> np.ndarray:
        est = 0.5 * (self.rmin + self.wmin + self.rmax)
        return np.maximum.accumulate(est)

    def quantile(self, phi: float) -> float:
        """Smallest retained value whose estimated at-or-below weight reaches
        ``phi * total_weight``."""
        if len(self) == 0:
            raise ValueError("quantile of an empty sketch")
        target = phi * self.total_weight
        i = int(np.searchsorted(self._rank_le(), target, side="left"))
        return float(self.values[min(i, len(self) - 1)])


def _size_limit(eps: float) -> int | None:
    return None if eps == 0 else math.ceil(1.0 / eps)


def _prune(s: QuantileSketch) -> QuantileSketch:
    limit = _size_limit(s.eps)
    n = len(s)
    if limit is None or n <= limit:
        return s
    bound = 2.0 * s.eps * s.total_weight
    lo = s.rmin + s.wmin
    hi = np.maximum.accumulate(s.rmax - s.wmin)
    keep = [0]
    k = 0
    while k < n - 1:
        j = int(np.searchsorted(hi, lo[k] + bound, side="right")) - 1
        j = min(max(j, k + 1), n - 1)
        keep.append(j)
        k = j
    idx = np.asarray(keep)
    return QuantileSketch(s.values[idx], s.rmin[idx], s.rmax[idx], s.wmin[idx],
                          s.eps, s.total_weight)


def sketch_build(values, weights=None, eps: float = 0.0) -> QuantileSketch:
    """Summarise ``values`` (with positive ``weights``, default 1).

    With ``eps == 0`` the result is exact: one entry per distinct value.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if v.shape != w.shape:
        raise ValueError(f"length mismatch: {v.size} values, {w.size} weights")
    if not 0 <= eps < 0.5:
        raise ValueError(f"eps must lie in [0, 0.5), got {eps}")
    if np.isnan(v).any():
        raise ValueError("NaN value in sketch input")
    if w.size and not (w > 0).all():
        raise ValueError("sketch weights must be positive")
    if v.size == 0:
        return QuantileSketch.empty(eps)
    order = np.argsort(v)
    sv, sw = v[order], w[order]
    starts = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1]])
    uniq = sv[starts]
    wsum = np.add.reduceat(sw, starts)
    cum = np.cumsum(wsum)
    total = float(cum[-1])
    s = QuantileSketch(uniq, cum - wsum, cum, wsum, float(eps), total)
    return _prune(s)


def _bounds_at(s: QuantileSketch, vals: np.ndarray):
    """Per-value (rmin, rmax, wmin) contributions of ``s`` at the union grid."""
    n = len(s)
    if n == 0:
        z = np.zeros_like(vals)
        return z, z, z
    idx = np.searchsorted(s.values, vals, side="left")
    clipped = np.minimum(idx, n - 1)
    present = (idx < n) & (s.values[clipped] == vals)
    prev = idx - 1
    below = np.where(prev >= 0, s.rmin[np.maximum(prev, 0)] + s.wmin[np.maximum(prev, 0)], 0.0)
    above = np.where(idx < n, s.rmax[clipped] - s.wmin[clipped], s.total_weight)
    rmin = np.where(present, s.rmin[clipped], below)
    rmax = np.where(present, s.rmax[clipped], above)
    wmin = np.where(present, s.wmin[clipped], 0.0)
    return rmin, rmax, wmin


def sketch_merge(a: QuantileSketch, b: QuantileSketch) -> QuantileSketch:
    if a.eps != b.eps:
        raise ValueError(f"eps mismatch: {a.eps} vs {b.eps}")
    if len(b) == 0:
        return a
    if len(a) == 0:
        return b
    vals = np.union1d(a.values, b.values)
    ra, xa, wa = _bounds_at(a, vals)
    rb, xb, wb = _bounds_at(b, vals)
    merged = QuantileSketch(vals, ra + rb, xa + xb, wa + wb, a.eps,
                            a.total_weight + b.total_weight)
    return _prune(merged)


def _midpoints(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    mid = (lo + hi) / 2.0
    # adjacent floats: the midpoint may round up onto the upper value
    return np.where(mid >= hi, lo, mid)


def sketch_candidates(sketch: QuantileSketch, max_bins: int) -> np.ndarray:
    """At most ``max_bins - 1`` strictly increasing split thresholds.

    If the sketch retains no more than ``max_bins`` values every midpoint
    between neighbours is returned; otherwise one threshold per interior
    ``1/max_bins`` weighted quantile, placed just above the quantile value.
    """
    if max_bins < 1:
        raise ValueError(f"max_bins must be >= 1, got {max_bins}")
    n = len(sketch)
    if n < 2 or max_bins == 1:
        return np.zeros(0)
    v = sketch.values
    if n <= max_bins:
        return _midpoints(v[:-1], v[1:])
    targets = np.arange(1, max_bins) * (sketch.total_weight / max_bins)
    idx = np.searchsorted(sketch._rank_le(), targets, side="left")
    idx = np.unique(idx[idx < n - 1])
    return _midpoints(v[idx], v[idx + 1])


def feature_candidates(X: np.ndarray, weights: np.ndarray, max_bins: int,
                       eps: float | None = None, n_shards: int = 1) -> list[np.ndarray]:
    """Split thresholds for every column of ``X``.

    Rows are cut into ``n_shards`` contiguous shards; each shard is
    summarised on its own and the summaries are merged before candidates are
    drawn, mirroring a data-parallel build.
    """
    if eps is None:
        eps = 1.0 / (2 * max_bins)
    n = X.shape[0]
    bounds = np.linspace(0, n, max(1, n_shards) + 1).astype(int)
    out = []
    for j in range(X.shape[1]):
        merged = QuantileSketch.empty(eps)
        for s, e in zip(bounds[:-1], bounds[1:]):
            if e > s:
                merged = sketch_merge(merged, sketch_build(X[s:e, j], weights[s:e], eps))
        out.append(sketch_candidates(merged, max_bins))
    return out
