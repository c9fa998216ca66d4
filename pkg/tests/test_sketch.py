import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepcascade.sketch import (QuantileSketch, feature_candidates, sketch_build,
                                sketch_candidates, sketch_merge)


def true_rank(values, weights, x):
    return float(weights[values < x].sum())


def queries(values):
    u = np.unique(values)
    mids = (u[:-1] + u[1:]) / 2 if u.size > 1 else u
    return np.concatenate([u, mids, [u[0] - 1, u[-1] + 1]])


def max_rank_error(sketch, values, weights):
    return max(abs(sketch.rank(q) - true_rank(values, weights, q)) for q in queries(values))


def assert_same(a: QuantileSketch, b: QuantileSketch):
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_allclose(a.rmin, b.rmin, rtol=1e-12)
    np.testing.assert_allclose(a.rmax, b.rmax, rtol=1e-12)
    np.testing.assert_allclose(a.wmin, b.wmin, rtol=1e-12)
    assert a.total_weight == pytest.approx(b.total_weight, rel=1e-12)


def test_exact_sketch_entries():
    s = sketch_build([3.0, 1.0, 3.0, 2.0], [1.0, 2.0, 0.5, 1.0])
    assert s.entries == [(1.0, 2.0, 0.0, 0.0), (2.0, 1.0, 2.0, 2.0), (3.0, 1.5, 3.0, 3.0)]
    assert s.total_weight == 4.5
    assert s.rank(2.0) == 2.0
    assert s.rank(2.5) == 3.0
    assert s.rank(10.0) == 4.5
    assert s.quantile(0.5) == 2.0


def test_input_validation():
    with pytest.raises(ValueError, match="length"):
        sketch_build([1.0, 2.0], [1.0])
    with pytest.raises(ValueError, match="NaN"):
        sketch_build([np.nan])
    with pytest.raises(ValueError, match="positive"):
        sketch_build([1.0], [0.0])
    with pytest.raises(ValueError, match="eps"):
        sketch_build([1.0], eps=0.5)
    with pytest.raises(ValueError, match="eps mismatch"):
        sketch_merge(sketch_build([1.0], eps=0.1), sketch_build([2.0], eps=0.2))


def test_empty_sketch():
    e = sketch_build([], eps=0.1)
    assert len(e) == 0 and e.rank(1.0) == 0.0
    s = sketch_build([1.0, 2.0], eps=0.1)
    assert sketch_merge(e, s) is s and sketch_merge(s, e) is s
    with pytest.raises(ValueError):
        e.quantile(0.5)


@pytest.mark.parametrize("eps", [0.001, 0.01, 0.05])
@pytest.mark.parametrize("shards", [1, 4, 13])
def test_rank_error_on_10k_weighted_points(eps, shards):
    rng = np.random.default_rng(int(eps * 1000) + shards)
    v = np.round(rng.lognormal(size=10_000), 2)  # heavy ties
    w = rng.exponential(size=10_000) + 0.01
    bounds = np.linspace(0, v.size, shards + 1).astype(int)
    merged = sketch_build([], eps=eps)
    for a, b in zip(bounds[:-1], bounds[1:]):
        merged = sketch_merge(merged, sketch_build(v[a:b], w[a:b], eps))
    direct = sketch_build(v, w, eps)
    W = w.sum()
    for s in (merged, direct):
        assert s.total_weight == pytest.approx(W)
        assert s.max_gap() <= 2 * eps * W * (1 + 1e-9)
        assert max_rank_error(s, v, w) <= eps * W * (1 + 1e-9)
        assert len(s) <= 8 * np.ceil(1 / eps)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.floats(0.01, 10)), min_size=1, max_size=300),
       st.sampled_from([0.0, 0.02, 0.1, 0.25]), st.integers(1, 6))
def test_rank_error_property(pairs, eps, shards):
    v = np.array([p[0] for p in pairs], dtype=float)
    w = np.array([p[1] for p in pairs])
    parts = np.array_split(np.arange(v.size), shards)
    s = sketch_build([], eps=eps)
    for idx in parts:
        s = sketch_merge(s, sketch_build(v[idx], w[idx], eps))
    assert max_rank_error(s, v, w) <= eps * w.sum() * (1 + 1e-9) + 1e-9
    assert np.all(s.min_rank <= s.max_rank + 1e-9)


def test_disjoint_merge_equals_direct_build_exact():
    rng = np.random.default_rng(5)
    v = rng.normal(size=10_000)
    w = rng.uniform(0.5, 2, size=10_000)
    lo, hi = v < 0, v >= 0
    merged = sketch_merge(sketch_build(v[lo], w[lo]), sketch_build(v[hi], w[hi]))
    assert_same(merged, sketch_build(v, w))


def test_disjoint_merge_equals_direct_build_below_prune_limit():
    v = np.arange(40.0)
    a, b = sketch_build(v[:25], eps=0.01), sketch_build(v[25:], eps=0.01)
    assert_same(sketch_merge(b, a), sketch_build(v, eps=0.01))


def test_merge_is_order_insensitive_when_exact():
    rng = np.random.default_rng(8)
    parts = [rng.integers(0, 20, size=50).astype(float) for _ in range(3)]
    ab = sketch_merge(sketch_merge(sketch_build(parts[0]), sketch_build(parts[1])), sketch_build(parts[2]))
    ba = sketch_merge(sketch_build(parts[2]), sketch_merge(sketch_build(parts[1]), sketch_build(parts[0])))
    assert_same(ab, ba)


def test_candidates_small_column_are_all_midpoints():
    s = sketch_build([1.0, 2.0, 4.0, 4.0])
    np.testing.assert_array_equal(sketch_candidates(s, 8), [1.5, 3.0])
    assert sketch_candidates(sketch_build([7.0, 7.0]), 8).size == 0


def test_candidates_adjacent_floats_stay_below_upper_value():
    lo = 1.0
    hi = np.nextafter(lo, 2.0)
    c = sketch_candidates(sketch_build([lo, hi]), 4)
    assert c.tolist() == [lo]
    assert lo <= c[0] < hi


def test_candidates_large_column_are_quantiles():
    rng = np.random.default_rng(2)
    v = rng.normal(size=20_000)
    s = sketch_build(v, eps=1 / 64)
    c = sketch_candidates(s, 32)
    assert 20 <= c.size <= 31
    assert np.all(np.diff(c) > 0)
    # each bin holds roughly 1/32 of the data
    counts = np.diff(np.searchsorted(np.sort(v), c))
    assert counts.max() <= 3 * v.size / 32


def test_feature_candidates_respects_bins_and_shards():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(3000, 3))
    X[:, 2] = np.round(X[:, 2])
    w = np.ones(3000)
    one = feature_candidates(X, w, 16)
    many = feature_candidates(X, w, 16, n_shards=7)
    for c in one + many:
        assert c.size <= 15 and np.all(np.diff(c) > 0)
    np.testing.assert_array_equal(one[2], many[2])  # few distinct values: exact either way
