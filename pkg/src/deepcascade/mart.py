"""Weighted second-order gradient boosting with regression trees.

Loss is the instance-weighted binary log-loss. Every accumulation multiplies
the per-row gradient and hessian by the row weight; splits maximise the
usual second-order gain and leaves take the Newton step ``-G / (H + lambda)``.
Split candidates come from merged weighted quantile sketches and rows are
pre-binned against them, so growing a tree is histogram accumulation plus a
scan. :func:`train_mart_exact` is a slow exhaustive twin used as a test
oracle.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .dataio import DataError, Dataset
from .sketch import feature_candidates
from .splitting import GAIN_RTOL, gain_and_scale, pick_split

HESS_FLOOR = 1e-16


@dataclass(frozen=True)
class MartParams:
    num_trees: int = 50
    max_depth: int = 5
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    feature_subsample: float = 0.8
    max_bins: int = 256
    eps: float | None = None
    seed: int = 0
    n_shards: int = 1

    def __post_init__(self):
        checks = [
            (self.num_trees >= 0, "num_trees must be >= 0"),
            (self.max_depth >= 0, "max_depth must be >= 0"),
            (0 < self.learning_rate <= 1, "learning_rate must lie in (0, 1]"),
            (self.reg_lambda >= 0, "lambda must be >= 0"),
            (self.gamma >= 0, "gamma must be >= 0"),
            (self.min_child_weight >= 0, "min_child_weight must be >= 0"),
            (0 < self.feature_subsample <= 1, "feature_subsample must lie in (0, 1]"),
            (2 <= self.max_bins <= 65536, "max_bins must lie in [2, 65536]"),
            (self.eps is None or 0 <= self.eps < 0.5, "eps must lie in [0, 0.5)"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.n_shards >= 1, "n_shards must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def sketch_eps(self) -> float:
        return 1.0 / (2 * self.max_bins) if self.eps is None else self.eps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("reg_lambda")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MartParams":
        d = dict(d)
        if "lambda" in d:
            d["reg_lambda"] = d.pop("lambda")
        return cls(**d)


@dataclass(frozen=True)
class Tree:
    """Node arrays; ``feature[i] < 0`` marks a leaf. Node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"id": i, "leaf": float(self.value[i])})
            else:
                nodes.append({"id": i, "feature": int(self.feature[i]),
                              "threshold": float(self.threshold[i]),
                              "left": int(self.left[i]), "right": int(self.right[i]),
                              "gain": float(self.gain[i])})
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        b = _TreeBuilder()
        for i, node in enumerate(d["nodes"]):
            if node["id"] != i:
                raise ValueError(f"tree nodes out of order at position {i}")
            if "leaf" in node:
                b.add_leaf(node["leaf"])
            else:
                j = b.add_internal(node["feature"], node["threshold"], node["gain"])
                b.link(j, node["left"], node["right"])
        return b.build()


class _TreeBuilder:
    def __init__(self):
        self.feature, self.threshold, self.left = [], [], []
        self.right, self.value, self.gain = [], [], []

    def _add(self, f, t, v, g):
        self.feature.append(f)
        self.threshold.append(t)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(v)
        self.gain.append(g)
        return len(self.feature) - 1

    def add_leaf(self, value):
        return self._add(-1, 0.0, float(value), 0.0)

    def add_internal(self, feature, threshold, gain):
        return self._add(int(feature), float(threshold), 0.0, float(gain))

    def link(self, node, left, right):
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        ip = np.intp
        return Tree(np.array(self.feature, dtype=ip), np.array(self.threshold, dtype=np.float64),
                    np.array(self.left, dtype=ip), np.array(self.right, dtype=ip),
                    np.array(self.value, dtype=np.float64), np.array(self.gain, dtype=np.float64))


@dataclass(frozen=True)
class MartModel:
    trees: tuple[Tree, ...]
    base_score: float
    params: MartParams
    num_features: int

    def predict_margin(self, rows) -> np.ndarray:
        return predict_margin(self, rows)

    def predict_proba(self, rows) -> np.ndarray:
        return predict_proba(self, rows)

    def truncated(self, n_trees: int) -> "MartModel":
        return replace(self, trees=self.trees[:n_trees])

    def to_dict(self) -> dict:
        return {"base_score": float(self.base_score), "num_features": self.num_features,
                "params": self.params.to_dict(), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "MartModel":
        return cls(tuple(Tree.from_dict(t) for t in d["trees"]), float(d["base_score"]),
                   MartParams.from_dict(d["params"]), int(d["num_features"]))


@dataclass(frozen=True)
class SplitDecision:
    feature: int
    threshold: float
    gain: float
    threshold_index: int = field(default=-1, compare=False)


def sigmoid(margin):
    m = np.asarray(margin, dtype=np.float64)
    e = np.exp(-np.abs(m))
    return np.where(m >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logistic_grad_hess(y, margin):
    """Gradient and hessian of the log-loss in the margin; works elementwise."""
    p = sigmoid(margin)
    g = p - np.asarray(y, dtype=np.float64)
    h = np.maximum(p * (1.0 - p), HESS_FLOOR)
    if np.ndim(g) == 0:
        return float(g), float(h)
    return g, h


def log_loss(y, margin, weights=None) -> float:
    """Total (weighted) log-loss, computed stably from margins."""
    m = np.asarray(margin, dtype=np.float64)
    loss = np.logaddexp(0.0, m) - np.asarray(y) * m
    w = np.ones_like(m) if weights is None else np.asarray(weights)
    return float(np.sum(w * loss))


def split_gain(GL, HL, GR, HR, reg_lambda, gamma):
    gain, _ = gain_and_scale(GL, HL, GR, HR, reg_lambda, gamma)
    return float(gain) if np.ndim(gain) == 0 else gain


def _scan(hist, n_thresholds, params: MartParams):
    return kernels.scan_histogram(hist, n_thresholds, params.reg_lambda, params.gamma,
                                  params.min_child_weight, GAIN_RTOL)


def sample_features(d: int, fraction: float, seed: int, tree_index: int) -> np.ndarray:
    """Sorted column subset drawn once per tree."""
    k = max(1, int(round(fraction * d)))
    if k >= d:
        return np.arange(d, dtype=np.intp)
    rng = np.random.default_rng([seed, tree_index])
    return np.sort(rng.choice(d, size=k, replace=False)).astype(np.intp)


def bin_matrix(X: np.ndarray, thresholds: list[np.ndarray], max_bins: int) -> np.ndarray:
    """Feature-major bin indices: ``out[j, i]`` counts the column-j thresholds
    strictly below ``X[i, j]``, so ``x <= thresholds[k]`` iff ``bin <= k``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    dtype = np.uint8 if max_bins <= 256 else np.uint16
    out = np.empty((X.shape[1], X.shape[0]), dtype=dtype)
    offsets = np.zeros(len(thresholds) + 1, dtype=np.intp)
    offsets[1:] = np.cumsum([t.shape[0] for t in thresholds])
    flat = np.concatenate(thresholds) if thresholds else np.zeros(0)
    kernels.bin_columns(X, np.ascontiguousarray(flat, dtype=np.float64), offsets, out)
    return out


class _HistGrower:
    def __init__(self, binned, thresholds, wg, wh, params: MartParams):
        self.binned = binned
        self.thresholds = thresholds
        self.n_thresholds_all = np.array([t.shape[0] for t in thresholds], dtype=np.intp)
        self.wg = wg
        self.wh = wh
        self.params = params

    def _hist(self, rows, features):
        out = np.zeros((features.shape[0], self.params.max_bins, 3))
        kernels.build_histogram(self.binned, rows, self.wg, self.wh, features, out)
        return out

    def grow(self, rows, features):
        self.features = features
        self.n_thresholds = self.n_thresholds_all[features]
        self.builder = _TreeBuilder()
        self.leaves = []
        hist = self._hist(rows, features) if self.params.max_depth > 0 else None
        self._node(rows, hist, 0)
        return self.builder.build(), self.leaves

    def _leaf(self, rows):
        G = self.wg[rows].sum()
        H = self.wh[rows].sum()
        value = -G / (H + self.params.reg_lambda)
        self.leaves.append((rows, value))
        return self.builder.add_leaf(value)

    def _node(self, rows, hist, depth):
        p = self.params
        split = None
        if depth < p.max_depth and rows.shape[0] >= 2:
            split = _scan(hist, self.n_thresholds, p)
        if split is None:
            return self._leaf(rows)
        slot, k, gain = split
        f = int(self.features[slot])
        node = self.builder.add_internal(f, self.thresholds[f][k], gain)
        left, right = kernels.partition(self.binned, rows, f, k)
        h_left = h_right = None
        if depth + 1 < p.max_depth:
            if left.shape[0] <= right.shape[0]:
                h_left = self._hist(left, self.features)
                h_right = hist - h_left
            else:
                h_right = self._hist(right, self.features)
                h_left = hist - h_right
        li = self._node(left, h_left, depth + 1)
        ri = self._node(right, h_right, depth + 1)
        self.builder.link(node, li, ri)
        return node


def _check_xy(X, y, w):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    w = np.ones(X.shape[0]) if w is None else np.asarray(w, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],) or w.shape != y.shape:
        raise DataError("features, labels and weights are misaligned")
    return X, y, w


def base_score_for(y, w) -> float:
    pos = float(np.sum(w * y))
    tot = float(np.sum(w))
    if pos <= 0 or pos >= tot:
        raise DataError("training data must contain both classes")
    p = pos / tot
    return float(np.log(p / (1.0 - p)))


def find_best_split(X, rows, g, h, w, candidates_per_feature, params: MartParams,
                    features=None) -> SplitDecision | None:
    """Best split of the instance set ``rows`` over the given thresholds.

    ``left = {x <= threshold}``; ties go to the lowest feature index, then
    the lowest threshold.
    """
    X, _, w = _check_xy(X, np.zeros(np.shape(X)[0]), w)
    rows = np.asarray(rows, dtype=np.intp)
    if features is None:
        features = np.arange(X.shape[1], dtype=np.intp)
    binned = bin_matrix(X, candidates_per_feature, params.max_bins)
    grower = _HistGrower(binned, candidates_per_feature, w * g, w * h, params)
    hist = grower._hist(rows, features)
    n_thr = grower.n_thresholds_all[features]
    split = _scan(hist, n_thr, params)
    if split is None:
        return None
    slot, k, gain = split
    f = int(features[slot])
    return SplitDecision(f, float(candidates_per_feature[f][k]), gain, k)


def grow_tree(X, g, h, w, params: MartParams, feature_mask=None, thresholds=None) -> Tree:
    """One tree fitted to weighted gradients ``g`` and hessians ``h``."""
    X, _, w = _check_xy(X, np.zeros(np.shape(X)[0]), w)
    if thresholds is None:
        thresholds = feature_candidates(X, w, params.max_bins, params.sketch_eps, params.n_shards)
    if feature_mask is None:
        features = np.arange(X.shape[1], dtype=np.intp)
    else:
        features = np.flatnonzero(np.asarray(feature_mask)).astype(np.intp)
    binned = bin_matrix(X, thresholds, params.max_bins)
    grower = _HistGrower(binned, thresholds, w * np.asarray(g), w * np.asarray(h), params)
    tree, _ = grower.grow(np.arange(X.shape[0], dtype=np.intp), features)
    return tree


def fit_mart(X, y, w, params: MartParams, thresholds=None) -> MartModel:
    """Boost ``params.num_trees`` trees on arrays; see :func:`train_mart`.

    ``thresholds`` (one sorted array per column) skips candidate generation,
    for callers that already merged sketches for these rows.
    """
    X, y, w = _check_xy(X, y, w)
    n, d = X.shape
    base = base_score_for(y, w)
    trees: list[Tree] = []
    if params.num_trees > 0:
        if thresholds is None:
            thresholds = feature_candidates(X, w, params.max_bins, params.sketch_eps,
                                            params.n_shards)
        binned = bin_matrix(X, thresholds, params.max_bins)
        margin = np.full(n, base)
        all_rows = np.arange(n, dtype=np.intp)
        yf = y.astype(np.float64)
        for t in range(params.num_trees):
            g, h = logistic_grad_hess(yf, margin)
            grower = _HistGrower(binned, thresholds, w * g, w * h, params)
            features = sample_features(d, params.feature_subsample, params.seed, t)
            tree, leaves = grower.grow(all_rows, features)
            for rows, value in leaves:
                margin[rows] += params.learning_rate * value
            trees.append(tree)
    return MartModel(tuple(trees), base, params, d)


def train_mart(dataset: Dataset, params: MartParams) -> MartModel:
    return fit_mart(dataset.features, dataset.labels, dataset.weights, params)


def predict_margin(model: MartModel, rows) -> np.ndarray:
    X = np.ascontiguousarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.num_features:
        raise DataError(f"expected {model.num_features} features per row, got {X.shape[1]}")
    out = np.full(X.shape[0], model.base_score)
    lr = model.params.learning_rate
    for t in model.trees:
        kernels.predict_tree(X, t.feature, t.threshold, t.left, t.right, t.value, lr, out)
    return out


def predict_proba(model: MartModel, rows) -> np.ndarray:
    return sigmoid(predict_margin(model, rows))


def feature_importance(model: MartModel) -> np.ndarray:
    """Per-feature split gain summed within each tree, averaged over trees."""
    d = model.num_features
    if not model.trees:
        return np.zeros(d)
    total = np.zeros(d)
    for t in model.trees:
        inner = t.feature >= 0
        total += np.bincount(t.feature[inner], weights=t.gain[inner], minlength=d)
    return total / len(model.trees)


# ---------------------------------------------------------------------------
# exhaustive reference trainer

def exact_thresholds(column: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct values of ``column``."""
    u = np.unique(column)
    mid = (u[:-1] + u[1:]) / 2.0
    return np.where(mid >= u[1:], u[:-1], mid)


def _exact_node(X, rows, wg, wh, thresholds, features, params, builder, depth):
    best = None
    if depth < params.max_depth and rows.shape[0] >= 2:
        gains, scales, valids, where = [], [], [], []
        for f in features:
            t = thresholds[f]
            if t.shape[0] == 0:
                continue
            x = X[rows, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            cg = np.cumsum(wg[rows][order])
            ch = np.cumsum(wh[rows][order])
            n_left = np.searchsorted(xs, t, side="right")
            has_left = n_left > 0
            last = np.maximum(n_left - 1, 0)
            GL = np.where(has_left, cg[last], 0.0)
            HL = np.where(has_left, ch[last], 0.0)
            GR, HR = cg[-1] - GL, ch[-1] - HL
            mcw = params.min_child_weight
            valid = has_left & (n_left < rows.shape[0]) & (HL >= mcw) & (HR >= mcw)
            gain, scale = gain_and_scale(GL, HL, GR, HR, params.reg_lambda, params.gamma)
            gains.append(gain)
            scales.append(scale)
            valids.append(valid)
            where.extend((f, k) for k in range(t.shape[0]))
        if gains:
            idx = pick_split(np.concatenate(gains), np.concatenate(scales),
                             np.concatenate(valids))
            if idx is not None:
                best = where[idx], float(np.concatenate(gains)[idx])
    if best is None:
        value = -wg[rows].sum() / (wh[rows].sum() + params.reg_lambda)
        return builder.add_leaf(value), [(rows, value)]
    (f, k), gain = best
    thr = thresholds[f][k]
    node = builder.add_internal(f, thr, gain)
    go_left = X[rows, f] <= thr
    li, ll = _exact_node(X, rows[go_left], wg, wh, thresholds, features, params, builder, depth + 1)
    ri, rl = _exact_node(X, rows[~go_left], wg, wh, thresholds, features, params, builder, depth + 1)
    builder.link(node, li, ri)
    return node, ll + rl


def train_mart_exact(dataset: Dataset, params: MartParams) -> MartModel:
    """Reference boosting that scans every midpoint of every feature.

    Quadratic in the node size; meant for a few hundred rows at most.
    """
    X, y, w = dataset.features, dataset.labels, dataset.weights
    n, d = X.shape
    base = base_score_for(y, w)
    thresholds = [exact_thresholds(X[:, j]) for j in range(d)]
    margin = np.full(n, base)
    trees = []
    for t in range(params.num_trees):
        g, h = logistic_grad_hess(y.astype(np.float64), margin)
        features = sample_features(d, params.feature_subsample, params.seed, t)
        builder = _TreeBuilder()
        _, leaves = _exact_node(X, np.arange(n), w * g, w * h, thresholds, features,
                                params, builder, 0)
        for rows, value in leaves:
            margin[rows] += params.learning_rate * value
        trees.append(builder.build())
    return MartModel(tuple(trees), base, params, d)
