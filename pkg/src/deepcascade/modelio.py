"""Run configuration and the versioned JSON model file."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .cascade import CascadeConfig, CascadeModel, Layer
from .dataio import DataError
from .mart import MartParams
from .metrics import DEFAULT_RATES

FORMAT = "deepcascade-model"
FORMAT_VERSION = 1
WEIGHT_MODES = ("none", "balanced")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class RunConfig:
    """Flat key set covering the cascade, its learners and the I/O plumbing."""

    k_folds: int = 5
    learners_per_layer: int = 4
    stop_metric: str = "auc"
    patience: int = 1
    max_layers: int = 20
    top_k_features: int | None = None
    seed: int = 0
    pool_size: int = 1
    num_trees: int = 50
    max_depth: int = 5
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    feature_subsample: float = 0.8
    max_bins: int = 256
    eps: float | None = None
    n_shards: int = 1
    weight_mode: str = "none"
    rates: tuple[float, ...] = DEFAULT_RATES
    train_data: str | None = None
    model_path: str | None = None
    checkpoint_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}, got {self.weight_mode!r}")
        if not self.rates or not all(0 < r <= 1 for r in self.rates):
            raise ConfigError("rates must be a non-empty list of values in (0, 1]")
        try:
            self.cascade_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def mart_params(self) -> MartParams:
        return MartParams(num_trees=self.num_trees, max_depth=self.max_depth,
                          learning_rate=self.learning_rate, reg_lambda=self.reg_lambda,
                          gamma=self.gamma, min_child_weight=self.min_child_weight,
                          feature_subsample=self.feature_subsample, max_bins=self.max_bins,
                          eps=self.eps, seed=self.seed, n_shards=self.n_shards)

    def cascade_config(self) -> CascadeConfig:
        return CascadeConfig(k_folds=self.k_folds, learners_per_layer=self.learners_per_layer,
                             mart_params=self.mart_params(), stop_metric=self.stop_metric,
                             patience=self.patience, max_layers=self.max_layers,
                             top_k_features=self.top_k_features, seed=self.seed,
                             pool_size=self.pool_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("reg_lambda")
        d["rates"] = list(self.rates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)} - {"reg_lambda"} | {"lambda"}
        for key in d:
            if key not in known:
                raise ConfigError(f"unknown config key: {key!r}")
        d = dict(d)
        if "lambda" in d:
            d["reg_lambda"] = d.pop("lambda")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)


def model_to_dict(model: CascadeModel, run_config: RunConfig) -> dict:
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        # I/O paths are machine-local; leave them out so the file is portable
        "config": replace(run_config, train_data=None, model_path=None,
                          checkpoint_dir=None).to_dict(),
        "num_features": model.num_features,
        "selected_features": [int(i) for i in model.selected_features],
        "best_layer": model.best_layer,
        "metric_history": list(model.metric_history),
        "layers": [layer.to_dict() for layer in model.layers],
    }


def model_from_dict(doc: dict) -> tuple[CascadeModel, RunConfig]:
    if doc.get("format") != FORMAT:
        raise DataError("not a cascade model file")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported model format_version {version!r}; expected {FORMAT_VERSION}")
    run_config = RunConfig.from_dict(doc["config"])
    layers = tuple(Layer.from_dict(layer) for layer in doc["layers"])
    model = CascadeModel(layers, np.asarray(doc["selected_features"], dtype=np.intp),
                         int(doc["best_layer"]), tuple(float(s) for s in doc["metric_history"]),
                         run_config.cascade_config(), int(doc["num_features"]))
    return model, run_config


def save_model(model: CascadeModel, run_config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, run_config), fh, indent=1)
        fh.write("\n")


def load_model(path) -> tuple[CascadeModel, RunConfig]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"missing file: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from None
    try:
        return model_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model file {path}: {exc!r}") from None
