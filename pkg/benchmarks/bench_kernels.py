"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--rows 200000] [--cols 50] [--repeat 3]

Reports the best of ``--repeat`` runs per kernel and for a short end-to-end
training run, then checks that both backends grew identical models.
"""
import argparse
import time

import numpy as np

from deepcascade import kernels
from deepcascade.dataio import synth_imbalanced
from deepcascade.mart import MartParams, bin_matrix, train_mart
from deepcascade.sketch import feature_candidates


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(X, max_bins):
    n, d = X.shape
    thr = feature_candidates(X, np.ones(n), max_bins)
    flat = np.concatenate(thr)
    offsets = np.r_[0, np.cumsum([t.size for t in thr])].astype(np.intp)
    binned = bin_matrix(X, thr, max_bins)
    rng = np.random.default_rng(0)
    rows = np.sort(rng.choice(n, size=n // 2, replace=False)).astype(np.intp)
    g, h = rng.normal(size=n), rng.uniform(0.01, 0.25, size=n)
    feats = np.arange(d, dtype=np.intp)
    n_thr = np.array([t.size for t in thr], dtype=np.intp)
    hist = np.zeros((d, max_bins, 3))
    out = np.empty_like(binned)

    def histogram():
        hist.fill(0.0)
        kernels.build_histogram(binned, rows, g, h, feats, hist)

    histogram()
    return {
        "bin_columns": lambda: kernels.bin_columns(X, flat, offsets, out),
        "build_histogram": histogram,
        "scan_histogram": lambda: kernels.scan_histogram(hist, n_thr, 1.0, 0.0, 1.0, 1e-10),
        "partition": lambda: kernels.partition(binned, rows, 0, max_bins // 2),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--cols", type=int, default=50)
    ap.add_argument("--trees", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = kernels.available()
    if "cython" not in backends:
        print("compiled kernels not built; only the numpy fallback is available")
    ds = synth_imbalanced(args.rows, args.cols, min(10, args.cols), 0.05, seed=0)
    params = MartParams(num_trees=args.trees)
    timings, models = {}, {}
    before = kernels.backend
    try:
        for name in backends:
            kernels.set_backend(name)
            for case, fn in kernel_cases(ds.features, params.max_bins).items():
                timings[name, case] = best_of(fn, args.repeat)
            t = time.perf_counter()
            models[name] = train_mart(ds, params)
            timings[name, f"train_mart ({args.trees} trees)"] = time.perf_counter() - t
    finally:
        kernels.set_backend(before)

    cases = list(dict.fromkeys(case for _, case in timings))
    print(f"{args.rows} rows x {args.cols} features, best of {args.repeat}")
    print(f"{'kernel':<26}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for case in cases:
        row = [timings[b, case] for b in backends]
        speedup = f"{row[1] / row[0]:>10.1f}x" if len(row) == 2 else ""
        print(f"{case:<26}" + "".join(f"{t * 1e3:>10.1f}ms" for t in row) + speedup)
    if len(models) == 2:
        same = models["cython"].to_dict() == models["python"].to_dict()
        print(f"identical models across backends: {same}")


if __name__ == "__main__":
    main()
