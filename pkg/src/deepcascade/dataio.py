"""Binary-classification datasets: CSV I/O, stratified folds, class weights
and a synthetic imbalanced generator."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Malformed input data (bad cell, ragged row, non-binary label...)."""


@dataclass(frozen=True)
class Dataset:
    """Dense feature matrix with binary labels and positive instance weights.

    Arrays are copied on construction and frozen, so a ``Dataset`` can be
    shared between threads without locking.
    """

    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray | None = None
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, order="C")
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        n, d = X.shape
        y = np.asarray(self.labels)
        if y.shape != (n,):
            raise DataError(f"expected {n} labels, got shape {y.shape}")
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            raise DataError(f"non-binary label at row {int(bad[0])}")
        y = y.astype(np.int8)
        if self.weights is None:
            w = np.ones(n)
        else:
            w = np.array(self.weights, dtype=np.float64)
            if w.shape != (n,):
                raise DataError(f"expected {n} weights, got shape {w.shape}")
            bad = np.flatnonzero(~(w > 0) | ~np.isfinite(w))
            if bad.size:
                raise DataError(f"weight must be positive and finite at row {int(bad[0])}")
        if not np.isfinite(X).all():
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature value at row {r}, column {c}")
        names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(d))
        if len(names) != d:
            raise DataError(f"expected {d} feature names, got {len(names)}")
        for arr in (X, y, w):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def with_weights(self, weights) -> "Dataset":
        return Dataset(self.features, self.labels, weights, self.feature_names)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.features[rows], self.labels[rows], self.weights[rows],
                       self.feature_names)

    def project(self, columns: Sequence[int]) -> "Dataset":
        columns = list(columns)
        return Dataset(self.features[:, columns], self.labels, self.weights,
                       tuple(self.feature_names[j] for j in columns))


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray

    def valid_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite cell {cell!r} at row {row}, column {col}")
    return value


def _resolve_column(column, header: list[str] | None, width: int, what: str) -> int:
    if isinstance(column, str) and not column.lstrip("-").isdigit():
        if header is None:
            raise DataError(f"{what} column {column!r} given by name but the file has no header")
        if column not in header:
            raise DataError(f"{what} column {column!r} not found in header")
        return header.index(column)
    idx = int(column)
    if idx < 0:
        idx += width
    if not 0 <= idx < width:
        raise DataError(f"{what} column index {column} out of range for {width} columns")
    return idx


def load_csv(path, has_header: bool = True, label_column="label",
             weight_column=None) -> Dataset:
    """Read a comma-separated file of numeric rows into a :class:`Dataset`.

    ``label_column`` and ``weight_column`` are header names or zero-based
    indices (negative indices count from the end); ``label_column=None``
    reads unlabeled rows, whose labels are set to 0. Row numbers in error
    messages are 1-based data rows, not counting the header.
    """
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = None
    if has_header and rows:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataError("no data rows")
    width = len(header) if header is not None else len(rows[0])
    label_idx = None
    if label_column is not None:
        label_idx = _resolve_column(label_column, header, width, "label")
    weight_idx = None
    if weight_column is not None:
        weight_idx = _resolve_column(weight_column, header, width, "weight")
        if label_idx is not None and weight_idx == label_idx:
            raise DataError("weight column and label column are the same")
    keep = [j for j in range(width) if j not in (label_idx, weight_idx)]

    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DataError(f"ragged row {i}: expected {width} cells, got {len(row)}")
    try:
        table = np.array(rows, dtype=np.float64)
        clean = bool(np.isfinite(table).all())
    except ValueError:
        clean = False
    if not clean:
        # slow pass, only to report the first offending cell
        table = np.array([[_parse_float(c, i, j) for j, c in enumerate(row)]
                          for i, row in enumerate(rows, start=1)])
    y = np.zeros(len(rows), dtype=np.int8)
    if label_idx is not None:
        col = table[:, label_idx]
        bad = np.flatnonzero((col != 0) & (col != 1))
        if bad.size:
            raise DataError(f"non-binary label at row {int(bad[0]) + 1}")
        y = col.astype(np.int8)
    w = table[:, weight_idx] if weight_idx is not None else None
    X = table[:, keep]
    names = tuple(header[j] for j in keep) if header is not None else ()
    return Dataset(X, y, w, names)


def write_csv(dataset: Dataset, path, label_name: str = "label",
              weight_name: str | None = None) -> None:
    """Write features then label (then weight, if named). Floats use ``repr``
    so a round trip through :func:`load_csv` is bit-exact."""
    header = list(dataset.feature_names) + [label_name]
    if weight_name is not None:
        header.append(weight_name)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i in range(dataset.n_rows):
            row = [repr(float(v)) for v in dataset.features[i]]
            row.append(str(int(dataset.labels[i])))
            if weight_name is not None:
                row.append(repr(float(dataset.weights[i])))
            out.writerow(row)


def write_scores(scores, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("score\n")
        for s in scores:
            fh.write(repr(float(s)) + "\n")


def read_scores(path) -> np.ndarray:
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0] != ["score"]:
        raise DataError(f"{path}: expected header 'score'")
    return np.array([_parse_float(r[0], i, 0) for i, r in enumerate(rows[1:], start=1)])


def kfold_split(labels, k: int, seed: int, stratified: bool = True) -> FoldPlan:
    """Assign every row to one of ``k`` folds.

    ``labels`` may be a :class:`Dataset` or a label vector. Stratified plans
    deal each class round-robin over the folds after a seeded shuffle, with
    the negatives continuing where the positives stopped, so both per-fold
    positive counts and fold sizes differ by at most one.
    """
    if isinstance(labels, Dataset):
        labels = labels.labels
    y = np.asarray(labels)
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    n = y.shape[0]
    if n < k:
        raise DataError(f"cannot split {n} rows into {k} folds")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=np.int64)
    if not stratified:
        perm = rng.permutation(n)
        assignments[perm] = np.arange(n) % k
        return FoldPlan(k, assignments)
    offset = 0
    for cls in (1, 0):
        members = np.flatnonzero(y == cls)
        if members.size < k:
            raise DataError(f"class {cls} has {members.size} rows, fewer than k={k}")
        members = rng.permutation(members)
        assignments[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return FoldPlan(k, assignments)


def balanced_weights(labels) -> np.ndarray:
    """Minority rows get weight majority/minority, majority rows 1.0."""
    y = np.asarray(labels)
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("balanced weights need both classes present")
    w = np.ones(y.shape[0])
    if n_pos < n_neg:
        w[y == 1] = n_neg / n_pos
    elif n_neg < n_pos:
        w[y == 0] = n_pos / n_neg
    return w


def synth_imbalanced(n: int, d: int, d_informative: int, pos_rate: float,
                     seed: int) -> Dataset:
    """Gaussian noise features with a rare positive class.

    Exactly ``round(n * pos_rate)`` rows are positive. For positives the
    first ``d_informative`` columns carry signal that rotates over three
    forms: a mean shift, an inflated variance, and a sign interaction with
    the neighbouring column. The remaining columns are pure noise. Each
    effect is weak on its own, so no single column separates the classes.
    """
    if n < 2 or d < 1:
        raise DataError(f"degenerate shape n={n}, d={d}")
    if not 0 < pos_rate < 1:
        raise DataError(f"pos_rate must lie in (0, 1), got {pos_rate}")
    if not 0 <= d_informative <= d:
        raise DataError(f"d_informative={d_informative} must lie in [0, d={d}]")
    n_pos = int(round(n * pos_rate))
    if not 0 < n_pos < n:
        raise DataError(f"pos_rate {pos_rate} gives {n_pos} positives out of {n}")
    rng = np.random.default_rng(seed)
    y = np.zeros(n, dtype=np.int8)
    y[rng.choice(n, size=n_pos, replace=False)] = 1
    X = rng.standard_normal((n, d))
    pos = np.flatnonzero(y == 1)
    for j in range(d_informative):
        col = X[pos, j]
        kind = j % 3
        if kind == 0:
            X[pos, j] = col + 0.3
        elif kind == 1:
            X[pos, j] = col * 1.35
        elif j + 1 < d_informative:
            # positives concentrate where this column and the next agree in sign
            other = X[pos, j + 1]
            flip = rng.random(pos.size) < 0.6
            X[pos, j] = np.where(flip, np.abs(col) * np.sign(other), col)
    return Dataset(X, y, None, tuple(f"f{j}" for j in range(d)))
