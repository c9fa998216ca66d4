"""Layered MART ensembles with out-of-fold class-vector augmentation.

Layer ``t`` trains ``L`` learner slots on each of ``K`` folds. Every learner
emits a two-column class vector ``[1 - p, p]`` for the rows of the fold it
never saw; these out-of-fold vectors are appended to the selected features
to form the next layer's input. Growth stops once the validation metric has
failed to improve for ``patience`` consecutive layers.

Training runs through :mod:`deepcascade.scheduler`: each layer is a job graph
(fold preparation, training, prediction, combination, gate) whose nodes talk
through payload files, and the gate node appends the next layer's graph.
"""
from __future__ import annotations

import json
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import scheduler
from .dataio import DataError, Dataset, FoldPlan, kfold_split
from .mart import MartModel, MartParams, feature_importance, fit_mart, train_mart
from .metrics import METRICS

N_CLASSES = 2


@dataclass(frozen=True)
class CascadeConfig:
    k_folds: int = 5
    learners_per_layer: int = 4
    mart_params: MartParams = field(default_factory=lambda: MartParams(num_trees=50))
    stop_metric: str = "auc"
    patience: int = 1
    max_layers: int = 20
    top_k_features: int | None = None
    seed: int = 0
    pool_size: int = 1
    selector_params: MartParams | None = None

    def __post_init__(self):
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.learners_per_layer < 1:
            raise ValueError("learners_per_layer must be >= 1")
        if self.stop_metric not in METRICS:
            raise ValueError(f"stop_metric must be one of {sorted(METRICS)}")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_layers < 1:
            raise ValueError("max_layers must be >= 1")
        if self.top_k_features is not None and self.top_k_features < 1:
            raise ValueError("top_k_features must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mart_params"] = self.mart_params.to_dict()
        d["selector_params"] = (None if self.selector_params is None
                                else self.selector_params.to_dict())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeConfig":
        d = dict(d)
        if "mart_params" in d:
            d["mart_params"] = MartParams.from_dict(d["mart_params"])
        if d.get("selector_params") is not None:
            d["selector_params"] = MartParams.from_dict(d["selector_params"])
        return cls(**d)


@dataclass(frozen=True)
class Layer:
    models: tuple[tuple[MartModel, ...], ...]  # models[f][j]
    validation_score: float
    input_width: int

    def class_vectors(self, X: np.ndarray) -> np.ndarray:
        """Fold-averaged ``[1 - p, p]`` per learner, learner-major."""
        k = len(self.models)
        probs = [sum(self.models[f][j].predict_proba(X) for f in range(k)) / k
                 for j in range(len(self.models[0]))]
        return class_vector_matrix(probs)

    def to_dict(self) -> dict:
        return {"validation_score": self.validation_score, "input_width": self.input_width,
                "folds": [[m.to_dict() for m in row] for row in self.models]}

    @classmethod
    def from_dict(cls, d: dict) -> "Layer":
        models = tuple(tuple(MartModel.from_dict(m) for m in row) for row in d["folds"])
        return cls(models, float(d["validation_score"]), int(d["input_width"]))


@dataclass(frozen=True)
class CascadeModel:
    layers: tuple[Layer, ...]
    selected_features: np.ndarray
    best_layer: int
    metric_history: tuple[float, ...]
    config: CascadeConfig
    num_features: int

    def predict(self, rows) -> np.ndarray:
        return predict_cascade(self, rows)

    def truncated(self) -> "CascadeModel":
        return replace(self, layers=self.layers[: self.best_layer + 1])


def learner_seed(seed: int, layer: int, learner: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, layer, learner, fold]).generate_state(1)[0])


def class_vector_matrix(probs) -> np.ndarray:
    cols = []
    for p in probs:
        cols.extend((1.0 - p, p))
    return np.column_stack(cols)


def augment(X, class_vectors) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if class_vectors is None:
        return X
    cv = np.asarray(class_vectors, dtype=np.float64)
    if cv.size == 0:
        if cv.ndim == 2 and cv.shape[0] not in (0, X.shape[0]):
            raise DataError(f"row mismatch: {X.shape[0]} vs {cv.shape[0]}")
        return X
    if cv.ndim != 2 or cv.shape[0] != X.shape[0]:
        raise DataError(f"row mismatch: {X.shape[0]} rows vs class vectors {cv.shape}")
    return np.hstack([X, cv])


def rank_features(dataset: Dataset, selector_params: MartParams):
    """Column indices by descending importance (ties to the lower index),
    with the importance vector of the ranking model."""
    imp = feature_importance(train_mart(dataset, selector_params))
    return np.argsort(-imp, kind="stable"), imp


def select_features(dataset: Dataset, selector_params: MartParams, top_k: int):
    """Keep the ``top_k`` most important columns, most important first."""
    d = dataset.n_features
    if not 1 <= top_k <= d:
        raise DataError(f"top_k must lie in [1, {d}], got {top_k}")
    order = rank_features(dataset, selector_params)[0][:top_k]
    return dataset.project(order.tolist()), order


# -- job bodies shared by the serial path and the scheduled path ------------

def _fit_fold(X, y, w, train_rows, config: CascadeConfig, layer: int, learner: int,
              fold: int) -> MartModel:
    params = replace(config.mart_params, seed=learner_seed(config.seed, layer, learner, fold))
    return fit_mart(X[train_rows], y[train_rows], w[train_rows], params)


def _score(config: CascadeConfig, oof: np.ndarray, y) -> float:
    mean_p = oof[:, 1::N_CLASSES].mean(axis=1)
    return float(METRICS[config.stop_metric](mean_p, y))


def stop_after(history, patience: int, max_layers: int) -> bool:
    """True once the best layer is ``patience`` layers old or the cap is hit."""
    best = int(np.argmax(history))
    return len(history) - 1 - best >= patience or len(history) >= max_layers


def train_layer(X, labels, weights, fold_plan: FoldPlan, config: CascadeConfig,
                layer_index: int):
    """Serial reference implementation of one layer; returns
    ``(Layer, oof_vectors, score)``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(labels)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    n = X.shape[0]
    if fold_plan.assignments.shape != (n,):
        raise DataError("fold plan does not cover every row")
    L, K = config.learners_per_layer, fold_plan.k
    oof = np.empty((n, L * N_CLASSES))
    grid = [[None] * L for _ in range(K)]
    for f in range(K):
        train_rows, valid_rows = fold_plan.train_rows(f), fold_plan.valid_rows(f)
        _check_fold(y, train_rows, f)
        for j in range(L):
            model = _fit_fold(X, y, w, train_rows, config, layer_index, j, f)
            grid[f][j] = model
            p = model.predict_proba(X[valid_rows])
            oof[valid_rows, N_CLASSES * j] = 1.0 - p
            oof[valid_rows, N_CLASSES * j + 1] = p
    score = _score(config, oof, y)
    layer = Layer(tuple(tuple(r) for r in grid), score, X.shape[1])
    return layer, oof, score


def _check_fold(y, train_rows, fold):
    yt = y[train_rows]
    if yt.size == 0 or yt.min() == yt.max():
        raise DataError(f"training rows outside fold {fold} hold a single class")


# -- scheduled execution -----------------------------------------------------

class CascadeRunner:
    """Job runner for cascade graphs. Holds only read-only inputs; all state
    flows through node payload files."""

    def __init__(self, X, y, w, fold_plan: FoldPlan, config: CascadeConfig):
        self.X = X
        self.y = y
        self.w = w
        self.fold_plan = fold_plan
        self.config = config

    def _layer_input(self, ctx, layer: int) -> np.ndarray:
        if layer == 0:
            return self.X
        oof = np.load(ctx.input_dir(f"L{layer - 1}.combine") / "oof.npy")
        return augment(self.X, oof)

    def __call__(self, node: scheduler.JobNode, ctx: scheduler.JobContext):
        p = node.params
        out = ctx.out_dir
        t = p["layer"]
        if node.kind == "fold_prep":
            f = p["fold"]
            _check_fold(self.y, self.fold_plan.train_rows(f), f)
            np.save(out / "train_rows.npy", self.fold_plan.train_rows(f))
            np.save(out / "valid_rows.npy", self.fold_plan.valid_rows(f))
        elif node.kind == "train":
            f, j = p["fold"], p["learner"]
            rows = np.load(ctx.input_dir(f"L{t}.prep.f{f}") / "train_rows.npy")
            X = self._layer_input(ctx, t)
            model = _fit_fold(X, self.y, self.w, rows, self.config, t, j, f)
            (out / "model.json").write_text(json.dumps(model.to_dict()))
        elif node.kind == "predict":
            f, j = p["fold"], p["learner"]
            rows = np.load(ctx.input_dir(f"L{t}.prep.f{f}") / "valid_rows.npy")
            model = MartModel.from_dict(json.loads(
                (ctx.input_dir(f"L{t}.train.j{j}.f{f}") / "model.json").read_text()))
            X = self._layer_input(ctx, t)
            np.save(out / "rows.npy", rows)
            np.save(out / "proba.npy", model.predict_proba(X[rows]))
        elif node.kind == "combine":
            L = self.config.learners_per_layer
            oof = np.full((len(self.y), L * N_CLASSES), np.nan)
            for dep in node.deps:
                q = ctx.input_dir(dep)
                j = int(dep.split(".")[2][1:])
                rows, proba = np.load(q / "rows.npy"), np.load(q / "proba.npy")
                oof[rows, N_CLASSES * j] = 1.0 - proba
                oof[rows, N_CLASSES * j + 1] = proba
            if np.isnan(oof).any():
                raise RuntimeError(f"layer {t}: out-of-fold matrix has gaps")
            np.save(out / "oof.npy", oof)
            (out / "score.json").write_text(json.dumps({"score": _score(self.config, oof, self.y)}))
        elif node.kind == "evaluate_gate":
            history = [json.loads((ctx.input_dir(f"L{i}.combine") / "score.json").read_text())["score"]
                       for i in range(t + 1)]
            cfg = self.config
            decision = {"history": history, "best_layer": int(np.argmax(history)),
                        "continue": not stop_after(history, cfg.patience, cfg.max_layers)}
            (out / "decision.json").write_text(json.dumps(decision))
        else:  # pragma: no cover - JobNode validates kinds
            raise ValueError(node.kind)

    def expand(self, node: scheduler.JobNode, ctx: scheduler.JobContext):
        if node.kind != "evaluate_gate":
            return []
        decision = json.loads((ctx.out_dir / "decision.json").read_text())
        if not decision["continue"]:
            return []
        t = node.params["layer"] + 1
        cfg = self.config
        return list(scheduler.build_layer_graph(t, cfg.k_folds, cfg.learners_per_layer,
                                                upstream=node.id).nodes.values())


def _collect(ckpt: scheduler.Checkpoint, config: CascadeConfig, n_layers: int, widths):
    layers = []
    for t in range(n_layers):
        grid = tuple(
            tuple(MartModel.from_dict(json.loads(
                (ckpt.out_dir(f"L{t}.train.j{j}.f{f}") / "model.json").read_text()))
                for j in range(config.learners_per_layer))
            for f in range(config.k_folds))
        score = json.loads((ckpt.out_dir(f"L{t}.combine") / "score.json").read_text())["score"]
        layers.append(Layer(grid, score, widths[t]))
    return layers


def train_cascade(dataset: Dataset, config: CascadeConfig, checkpoint=None,
                  event_log=None) -> CascadeModel:
    """Select features (if configured), then grow layers until the stopping
    rule fires. With a ``checkpoint`` directory, finished jobs from an
    earlier interrupted run are reused."""
    if dataset.labels.min() == dataset.labels.max():
        raise DataError("training data holds a single class")
    d = dataset.n_features
    if config.top_k_features is not None:
        sel_params = config.selector_params or replace(config.mart_params, seed=config.seed)
        reduced, selected = select_features(dataset, sel_params, config.top_k_features)
    else:
        reduced, selected = dataset, np.arange(d)
    plan = kfold_split(reduced.labels, config.k_folds, config.seed)
    runner = CascadeRunner(reduced.features, reduced.labels, reduced.weights, plan, config)
    graph = scheduler.build_layer_graph(0, config.k_folds, config.learners_per_layer)

    tmp = None
    if checkpoint is None:
        tmp = tempfile.TemporaryDirectory(prefix="cascade-")
        checkpoint = tmp.name
    try:
        ckpt = scheduler.Checkpoint(checkpoint)
        report = scheduler.resume(graph, ckpt, config.pool_size, runner, event_log=event_log)
        if not report.ok:
            first = next(iter(report.errors.items()), ("?", "unknown error"))
            raise RuntimeError(f"job {first[0]} failed: {first[1]}")
        gates = sorted((n.params["layer"] for n in graph.nodes.values()
                        if n.kind == "evaluate_gate"))
        decision = json.loads((ckpt.out_dir(f"L{gates[-1]}.gate") / "decision.json").read_text())
        n_layers = len(decision["history"])
        k = reduced.n_features
        widths = [k] + [k + config.learners_per_layer * N_CLASSES] * (n_layers - 1)
        layers = _collect(ckpt, config, n_layers, widths)
    finally:
        if tmp is not None:
            tmp.cleanup()
    history = tuple(float(s) for s in decision["history"])
    return CascadeModel(tuple(layers), np.asarray(selected, dtype=np.intp),
                        int(decision["best_layer"]), history, config, d)


def predict_cascade(model: CascadeModel, rows) -> np.ndarray:
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.num_features:
        raise DataError(f"expected {model.num_features} features per row, got {X.shape[1]}")
    base = X[:, model.selected_features]
    cv = None
    for t in range(model.best_layer + 1):
        cv = model.layers[t].class_vectors(augment(base, cv))
    return cv[:, 1::N_CLASSES].mean(axis=1)
