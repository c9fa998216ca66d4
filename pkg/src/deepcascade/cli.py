"""Command-line driver: ``deepcascade {gen-data,select,train,predict,eval}``.

Exit codes: 0 success, 1 runtime or data error, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cascade import predict_cascade, rank_features, train_cascade
from .dataio import (DataError, Dataset, balanced_weights, load_csv, read_scores,
                     synth_imbalanced, write_csv, write_scores)
from .metrics import DEFAULT_RATES, evaluate, write_pr_csv
from .modelio import ConfigError, RunConfig, load_model, save_model

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _rates(text: str) -> tuple[float, ...]:
    try:
        rates = tuple(float(r) for r in text.split(",") if r.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rate list {text!r}") from None
    if not rates or not all(0 < r <= 1 for r in rates):
        raise argparse.ArgumentTypeError("rates must lie in (0, 1]")
    return rates


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deepcascade",
                                description="Cascade of boosted-tree ensembles for imbalanced binary data.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic imbalanced dataset")
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--cols", type=int, required=True)
    g.add_argument("--informative", type=int, required=True)
    g.add_argument("--pos-rate", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    s = sub.add_parser("select", help="rank features with one boosted model and keep the top k")
    s.add_argument("--data", required=True)
    s.add_argument("--top-k", type=int, required=True)
    s.add_argument("--out-indices", required=True)
    s.add_argument("--out-data", required=True)
    s.add_argument("--config", help="JSON run config supplying learner parameters")

    t = sub.add_parser("train", help="train a cascade model")
    t.add_argument("--data")
    t.add_argument("--config")
    t.add_argument("--model")
    t.add_argument("--checkpoint", help="job checkpoint directory; reused on rerun")
    t.add_argument("--indices", help="index file from `select`, to accept full-width rows later")
    t.add_argument("--event-log", help="append scheduler transitions to this file")

    r = sub.add_parser("predict", help="score rows with a trained model")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="score quality report")
    e.add_argument("--scores", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--rates", type=_rates, default=DEFAULT_RATES)
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--pr-out")
    return p


def _load_data(path) -> Dataset:
    return load_csv(path, label_column="label")


def _load_rows(path) -> np.ndarray:
    with open(path) as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    return load_csv(path, label_column="label" if "label" in header else None).features


def cmd_gen_data(args) -> int:
    try:
        ds = synth_imbalanced(args.rows, args.cols, args.informative, args.pos_rate, args.seed)
    except DataError as exc:
        raise UsageError(str(exc)) from None
    write_csv(ds, args.out)
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    ds = _load_data(args.data)
    if not 1 <= args.top_k <= ds.n_features:
        raise UsageError(f"--top-k must lie in [1, {ds.n_features}], got {args.top_k}")
    if cfg.weight_mode == "balanced":
        ds = ds.with_weights(balanced_weights(ds.labels))
    ranked, imp = rank_features(ds, cfg.mart_params())
    order = ranked[: args.top_k]
    reduced = ds.project(order.tolist())
    doc = {"num_features": ds.n_features,
           "indices": [int(i) for i in order],
           "names": list(reduced.feature_names),
           "importances": [float(imp[i]) for i in order]}
    Path(args.out_indices).write_text(json.dumps(doc, indent=1) + "\n")
    write_csv(Dataset(reduced.features, reduced.labels, None, reduced.feature_names), args.out_data)
    return EXIT_OK


def _fingerprint(cfg: RunConfig, data_path) -> str:
    bare = replace(cfg, train_data=None, model_path=None, checkpoint_dir=None)
    h = hashlib.sha256(json.dumps(bare.to_dict(), sort_keys=True).encode())
    h.update(Path(data_path).read_bytes())
    return h.hexdigest()


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {k: v for k, v in (("train_data", args.data), ("model_path", args.model),
                                   ("checkpoint_dir", args.checkpoint)) if v is not None}
    cfg = replace(cfg, **overrides)
    if cfg.train_data is None or cfg.model_path is None:
        raise UsageError("train needs --data and --model (or train_data/model_path in the config)")
    ds = _load_data(cfg.train_data)
    if cfg.weight_mode == "balanced":
        ds = ds.with_weights(balanced_weights(ds.labels))
    checkpoint = cfg.checkpoint_dir
    if checkpoint is not None:
        ck = Path(checkpoint)
        ck.mkdir(parents=True, exist_ok=True)
        stamp = ck / "run.json"
        fp = _fingerprint(cfg, cfg.train_data)
        if stamp.exists() and json.loads(stamp.read_text()).get("fingerprint") != fp:
            raise DataError(f"checkpoint {checkpoint} belongs to a different config or dataset")
        stamp.write_text(json.dumps({"fingerprint": fp}) + "\n")
    model = train_cascade(ds, cfg.cascade_config(), checkpoint=checkpoint,
                          event_log=args.event_log)
    if args.indices:
        sel = json.loads(Path(args.indices).read_text())
        outer = np.asarray(sel["indices"], dtype=np.intp)
        if outer.size != model.num_features:
            raise DataError(f"index file lists {outer.size} columns, training data has "
                            f"{model.num_features}")
        model = replace(model, selected_features=outer[model.selected_features],
                        num_features=int(sel["num_features"]))
    save_model(model, cfg, cfg.model_path)
    print(json.dumps({"layers": len(model.layers), "best_layer": model.best_layer,
                      "metric_history": list(model.metric_history)}))
    return EXIT_OK


def cmd_predict(args) -> int:
    model, _ = load_model(args.model)
    X = _load_rows(args.data)
    if X.shape[1] != model.num_features:
        raise DataError(f"feature count mismatch: model expects {model.num_features}, "
                        f"data has {X.shape[1]}")
    write_scores(predict_cascade(model, X), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    scores = read_scores(args.scores)
    labels = _load_data(args.labels).labels
    report = evaluate(scores, labels, args.rates, args.threshold)
    print(json.dumps(report.to_dict(), indent=1))
    if args.pr_out:
        write_pr_csv(report.pr_points, args.pr_out)
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "select": cmd_select, "train": cmd_train,
            "predict": cmd_predict, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
