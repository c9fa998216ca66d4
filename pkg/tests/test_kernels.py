import numpy as np
import pytest

from deepcascade import _pykernels, kernels
from deepcascade.dataio import synth_imbalanced
from deepcascade.mart import MartParams, bin_matrix, train_mart
from deepcascade.sketch import feature_candidates

compiled = pytest.mark.skipif("cython" not in kernels.available(),
                              reason="compiled kernels not built")


@pytest.fixture
def backend():
    """Restore the default backend after a test switches it."""
    before = kernels.backend
    yield kernels.set_backend
    kernels.set_backend(before)


def setup_arrays(seed, n=700, d=5, max_bins=16):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    X[:, 1] = np.round(X[:, 1])
    thr = feature_candidates(X, np.ones(n), max_bins)
    return rng, X, thr


def test_unknown_backend(backend):
    with pytest.raises(ValueError):
        backend("fortran")


def test_bins_count_thresholds_strictly_below():
    _, X, thr = setup_arrays(0)
    binned = bin_matrix(X, thr, 16)
    for j in range(X.shape[1]):
        expected = np.searchsorted(thr[j], X[:, j], side="left")
        np.testing.assert_array_equal(binned[j], expected)
        # x <= threshold[k]  <=>  bin <= k
        for k, t in enumerate(thr[j]):
            np.testing.assert_array_equal(X[:, j] <= t, binned[j] <= k)


@compiled
@pytest.mark.parametrize("seed", range(3))
def test_backends_agree_on_each_kernel(seed):
    from deepcascade import _kernels as ck
    rng, X, thr = setup_arrays(seed)
    offsets = np.r_[0, np.cumsum([t.size for t in thr])].astype(np.intp)
    flat = np.concatenate(thr)
    a = np.empty((X.shape[1], X.shape[0]), dtype=np.uint8)
    b = np.empty_like(a)
    ck.bin_columns(X, flat, offsets, a)
    _pykernels.bin_columns(X, flat, offsets, b)
    np.testing.assert_array_equal(a, b)

    rows = np.sort(rng.choice(X.shape[0], size=300, replace=False)).astype(np.intp)
    g, h = rng.normal(size=X.shape[0]), rng.uniform(0.01, 0.25, size=X.shape[0])
    feats = np.array([0, 2, 4], dtype=np.intp)
    ha, hb = np.zeros((3, 16, 3)), np.zeros((3, 16, 3))
    ck.build_histogram(a, rows, g, h, feats, ha)
    _pykernels.build_histogram(a, rows, g, h, feats, hb)
    np.testing.assert_array_equal(ha, hb)

    n_thr = np.array([thr[f].size for f in feats], dtype=np.intp)
    sa = ck.scan_histogram(ha, n_thr, 1.0, 0.0, 1.0, 1e-10)
    sb = _pykernels.scan_histogram(hb, n_thr, 1.0, 0.0, 1.0, 1e-10)
    assert sa == sb

    slot, k, _ = sa
    f = int(feats[slot])
    la, ra = ck.partition(a, rows, f, k)
    lb, rb = _pykernels.partition(a, rows, f, k)
    np.testing.assert_array_equal(la, lb)
    np.testing.assert_array_equal(ra, rb)
    assert np.all(X[la, f] <= thr[f][k]) and np.all(X[ra, f] > thr[f][k])


@compiled
def test_training_is_identical_across_backends(backend):
    ds = synth_imbalanced(3000, 8, 5, 0.05, seed=3)
    params = MartParams(num_trees=10, max_depth=4)
    backend("cython")
    a = train_mart(ds, params)
    pa = a.predict_margin(ds.features)
    backend("python")
    b = train_mart(ds, params)
    assert a.to_dict() == b.to_dict()
    np.testing.assert_array_equal(b.predict_margin(ds.features), pa)


def test_python_backend_trains(backend):
    backend("python")
    assert kernels.backend == "python"
    ds = synth_imbalanced(500, 4, 3, 0.2, seed=1)
    model = train_mart(ds, MartParams(num_trees=3))
    p = model.predict_proba(ds.features)
    assert np.all((p > 0) & (p < 1))


def test_wide_bins_use_uint16():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(2000, 2))
    thr = feature_candidates(X, np.ones(2000), 1024)
    binned = bin_matrix(X, thr, 1024)
    assert binned.dtype == np.uint16
    assert binned.max() > 255
