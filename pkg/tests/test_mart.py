import json

import numpy as np
import pytest

from deepcascade.dataio import DataError, Dataset, synth_imbalanced
from deepcascade.mart import (MartModel, MartParams, Tree, base_score_for, feature_importance,
                              find_best_split, fit_mart, grow_tree, log_loss, logistic_grad_hess,
                              predict_margin, sample_features, sigmoid, split_gain, train_mart,
                              train_mart_exact)

EXACTISH = dict(max_bins=256, feature_subsample=1.0)


def loss(y, m):
    return np.logaddexp(0.0, m) - y * m


def test_gradients_match_central_differences():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, size=1000).astype(float)
    m = rng.uniform(-8, 8, size=1000)
    step = 1e-5
    g, h = logistic_grad_hess(y, m)
    g_fd = (loss(y, m + step) - loss(y, m - step)) / (2 * step)
    h_fd = (logistic_grad_hess(y, m + step)[0] - logistic_grad_hess(y, m - step)[0]) / (2 * step)
    np.testing.assert_allclose(g, g_fd, rtol=1e-5, atol=1e-12)
    np.testing.assert_allclose(h, h_fd, rtol=1e-5)


def test_scalar_grad_hess_and_floor():
    g, h = logistic_grad_hess(1, 0.0)
    assert (g, h) == (-0.5, 0.25)
    assert isinstance(g, float)
    assert logistic_grad_hess(0, 800.0)[1] == 1e-16


def test_sigmoid_is_stable():
    assert sigmoid(-1000.0) == 0.0 and sigmoid(1000.0) == 1.0
    np.testing.assert_allclose(sigmoid(np.array([-2.0, 0.0, 2.0])),
                               1 / (1 + np.exp(-np.array([-2.0, 0.0, 2.0]))))


def test_split_gain_formula():
    # 0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)) - gamma
    assert split_gain(-2.0, 1.0, 2.0, 1.0, 0.0, 0.0) == pytest.approx(4.0)
    assert split_gain(-2.0, 1.0, 2.0, 1.0, 1.0, 0.5) == pytest.approx(0.5 * (2 + 2 - 0) - 0.5)


def test_four_point_stump():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])
    params = MartParams(num_trees=1, max_depth=1, learning_rate=1.0, reg_lambda=0.0,
                        min_child_weight=0.0, feature_subsample=1.0)
    # margin 0 everywhere: g = +-0.5, h = 0.25
    g, h = logistic_grad_hess(y, np.zeros(4))
    tree = grow_tree(X, g, h, np.ones(4), params)
    assert tree.feature[0] == 0 and tree.threshold[0] == 2.5
    assert tree.gain[0] == pytest.approx(2.0)
    assert tree.value[tree.left[0]] == pytest.approx(-2.0)
    assert tree.value[tree.right[0]] == pytest.approx(2.0)


def test_find_best_split_tie_prefers_lower_feature():
    X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
    g = np.array([0.5, 0.5, -0.5, -0.5])
    h = np.full(4, 0.25)
    params = MartParams(reg_lambda=0.0, min_child_weight=0.0)
    cands = [np.array([1.5, 2.5, 3.5])] * 2
    split = find_best_split(X, np.arange(4), g, h, np.ones(4), cands, params)
    assert (split.feature, split.threshold) == (0, 2.5)
    assert find_best_split(X, np.arange(4), np.zeros(4), h, np.ones(4), cands, params) is None


def test_min_child_weight_and_gamma_block_splits():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    g = np.array([0.5, 0.5, -0.5, -0.5])
    h = np.full(4, 0.25)
    assert grow_tree(X, g, h, np.ones(4), MartParams(min_child_weight=0.6)).n_nodes == 1
    assert grow_tree(X, g, h, np.ones(4), MartParams(gamma=10.0)).n_nodes == 1
    assert grow_tree(X, g, h, np.ones(4), MartParams(max_depth=0)).n_nodes == 1


def test_base_score_is_weighted_log_odds():
    y = np.array([1, 0, 0, 0])
    assert base_score_for(y, np.ones(4)) == pytest.approx(np.log(1 / 3))
    assert base_score_for(y, np.array([3.0, 1, 1, 1])) == pytest.approx(0.0)
    with pytest.raises(DataError):
        base_score_for(np.zeros(4), np.ones(4))


@pytest.mark.parametrize("seed", range(5))
def test_histogram_trainer_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(30, 150)), int(rng.integers(1, 6))
    X = rng.normal(size=(n, d))
    X[:, 0] = np.round(X[:, 0])
    y = (X.sum(axis=1) + rng.normal(size=n) > 0).astype(int)
    y[:2] = [0, 1]
    w = rng.uniform(0.5, 3, size=n) if seed % 2 else None
    ds = Dataset(X, y, w)
    params = MartParams(num_trees=6, max_depth=3, min_child_weight=0.5, **EXACTISH)
    fast, slow = train_mart(ds, params), train_mart_exact(ds, params)
    for a, b in zip(fast.trees, slow.trees):
        np.testing.assert_array_equal(a.feature, b.feature)
        np.testing.assert_array_equal(a.threshold, b.threshold)
        np.testing.assert_allclose(a.value, b.value, rtol=1e-9)


def test_weight_scaling_invariance():
    ds = synth_imbalanced(400, 6, 4, 0.2, seed=1)
    params = MartParams(num_trees=8, reg_lambda=0.0, gamma=0.0, min_child_weight=0.0)
    ref = train_mart(ds, params).predict_proba(ds.features)
    for c in (0.5, 3.0, 100.0):
        scaled = train_mart(ds.with_weights(np.full(ds.n_rows, c)), params)
        np.testing.assert_allclose(scaled.predict_proba(ds.features), ref, atol=1e-9, rtol=0)


def test_integer_weight_equals_row_duplication():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] > 0).astype(int)
    w = rng.integers(1, 4, size=60).astype(float)
    params = MartParams(num_trees=5, max_depth=3, min_child_weight=0.0, **EXACTISH)
    weighted = train_mart(Dataset(X, y, w), params)
    rep = np.repeat(np.arange(60), w.astype(int))
    duplicated = train_mart(Dataset(X[rep], y[rep]), params)
    np.testing.assert_allclose(weighted.predict_margin(X), duplicated.predict_margin(X), rtol=1e-9)


def test_training_loss_decreases():
    ds = synth_imbalanced(2000, 10, 6, 0.1, seed=2)
    model = train_mart(ds, MartParams(num_trees=30))
    losses = [log_loss(ds.labels, model.truncated(k).predict_margin(ds.features))
              for k in range(0, 31, 3)]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_feature_importance_hand_computed():
    X = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]])
    y = np.array([0, 0, 1, 1])
    params = MartParams(num_trees=1, max_depth=1, learning_rate=1.0, reg_lambda=0.0,
                        min_child_weight=0.0, feature_subsample=1.0)
    model = train_mart(Dataset(X, y), params)
    np.testing.assert_allclose(feature_importance(model), [2.0, 0.0])
    assert feature_importance(model.truncated(0)).tolist() == [0.0, 0.0]


def test_importance_finds_informative_columns():
    ds = synth_imbalanced(5000, 12, 3, 0.1, seed=5)
    imp = feature_importance(train_mart(ds, MartParams(num_trees=20)))
    assert set(np.argsort(-imp)[:2].tolist()) <= {0, 1, 2}


def test_feature_sampling():
    a = sample_features(10, 0.5, seed=3, tree_index=7)
    assert a.tolist() == sample_features(10, 0.5, seed=3, tree_index=7).tolist()
    assert len(a) == 5 and np.all(np.diff(a) > 0)
    assert sample_features(10, 1.0, 0, 0).tolist() == list(range(10))
    assert len(sample_features(10, 0.01, 0, 0)) == 1


def test_serialization_roundtrip_is_bit_exact():
    ds = synth_imbalanced(500, 5, 3, 0.2, seed=6)
    model = train_mart(ds, MartParams(num_trees=5))
    doc = json.loads(json.dumps(model.to_dict()))
    back = MartModel.from_dict(doc)
    np.testing.assert_array_equal(back.predict_margin(ds.features), model.predict_margin(ds.features))
    node = doc["trees"][0]["nodes"][0]
    assert set(node) == {"id", "feature", "threshold", "left", "right", "gain"}
    assert doc["params"]["lambda"] == 1.0


def test_tree_depth_bound():
    ds = synth_imbalanced(3000, 8, 6, 0.2, seed=7)
    model = train_mart(ds, MartParams(num_trees=5, max_depth=3, min_child_weight=0.0))
    assert all(t.depth() <= 3 for t in model.trees)
    assert isinstance(model.trees[0], Tree)


def test_predict_width_mismatch():
    ds = synth_imbalanced(300, 4, 2, 0.2, seed=8)
    model = train_mart(ds, MartParams(num_trees=2))
    with pytest.raises(DataError, match="expected 4"):
        predict_margin(model, ds.features[:, :3])


@pytest.mark.parametrize("bad", [dict(num_trees=-1), dict(learning_rate=0.0), dict(reg_lambda=-1),
                                 dict(feature_subsample=0.0), dict(max_bins=1), dict(eps=0.5)])
def test_param_validation(bad):
    with pytest.raises(ValueError):
        MartParams(**bad)


def test_params_dict_roundtrip():
    p = MartParams(num_trees=7, reg_lambda=2.5, eps=0.01, n_shards=3)
    assert MartParams.from_dict(p.to_dict()) == p


def test_sharded_sketch_training_is_close_to_single_shard():
    ds = synth_imbalanced(4000, 6, 4, 0.1, seed=9)
    a = train_mart(ds, MartParams(num_trees=10, max_bins=32))
    b = train_mart(ds, MartParams(num_trees=10, max_bins=32, n_shards=4))
    diff = np.abs(a.predict_proba(ds.features) - b.predict_proba(ds.features))
    assert diff.mean() < 0.02


def test_fit_mart_rejects_misaligned_inputs():
    with pytest.raises(DataError):
        fit_mart(np.zeros((3, 2)), np.array([0, 1]), None, MartParams())
