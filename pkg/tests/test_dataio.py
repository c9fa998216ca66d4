import numpy as np
import pytest

from deepcascade.dataio import (DataError, Dataset, balanced_weights, kfold_split, load_csv,
                                read_scores, synth_imbalanced, write_csv, write_scores)


def write(path, text):
    path.write_text(text)
    return path


def test_dataset_is_frozen_and_validated():
    ds = Dataset([[1.0, 2.0], [3.0, 4.0]], [0, 1])
    assert ds.n_rows == 2 and ds.n_features == 2
    assert ds.feature_names == ("f0", "f1")
    np.testing.assert_array_equal(ds.weights, [1.0, 1.0])
    with pytest.raises(ValueError):
        ds.features[0, 0] = 9.0
    with pytest.raises(DataError, match="non-binary label at row 1"):
        Dataset([[1.0], [2.0]], [0, 2])
    with pytest.raises(DataError, match="weight"):
        Dataset([[1.0], [2.0]], [0, 1], [1.0, 0.0])
    with pytest.raises(DataError, match="non-finite"):
        Dataset([[1.0], [np.inf]], [0, 1])
    with pytest.raises(DataError, match="labels"):
        Dataset([[1.0], [2.0]], [0, 1, 1])


def test_subset_and_project():
    ds = Dataset(np.arange(12.0).reshape(4, 3), [0, 1, 0, 1], [1, 2, 3, 4], ("a", "b", "c"))
    sub = ds.subset([1, 3])
    np.testing.assert_array_equal(sub.weights, [2, 4])
    proj = ds.project([2, 0])
    assert proj.feature_names == ("c", "a")
    np.testing.assert_array_equal(proj.features[:, 0], [2, 5, 8, 11])


def test_csv_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4)) * 10.0 ** rng.integers(-8, 8, size=(30, 4))
    y = np.r_[np.zeros(15), np.ones(15)]
    w = rng.uniform(0.1, 5, size=30)
    ds = Dataset(X, y, w, ("a", "b", "c", "d"))
    write_csv(ds, tmp_path / "d.csv", weight_name="w")
    back = load_csv(tmp_path / "d.csv", weight_column="w")
    np.testing.assert_array_equal(back.features, X)
    np.testing.assert_array_equal(back.labels, y)
    np.testing.assert_array_equal(back.weights, w)
    assert back.feature_names == ds.feature_names


def test_csv_label_by_index_and_without_header(tmp_path):
    p = write(tmp_path / "d.csv", "1,0.5,2\n0,1.5,3\n")
    ds = load_csv(p, has_header=False, label_column=0)
    np.testing.assert_array_equal(ds.labels, [1, 0])
    np.testing.assert_array_equal(ds.features, [[0.5, 2], [1.5, 3]])
    unlabeled = load_csv(write(tmp_path / "u.csv", "a,b\n1,2\n"), label_column=None)
    np.testing.assert_array_equal(unlabeled.features, [[1, 2]])


@pytest.mark.parametrize("text,message", [
    ("a,label\n1,0\nx,1\n", "non-numeric cell 'x' at row 2, column 0"),
    ("a,label\n1,0\n2\n", "ragged row 2"),
    ("a,label\n1,0\n2,3\n", "non-binary label at row 2"),
    ("a,label\n", "no data rows"),
    ("a,label\n1,nan\n", "non-finite cell"),
    ("a,b\n1,0\n", "label column 'label' not found"),
])
def test_csv_errors(tmp_path, text, message):
    with pytest.raises(DataError, match=message):
        load_csv(write(tmp_path / "bad.csv", text))


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="missing file"):
        load_csv(tmp_path / "nope.csv")


def test_scores_roundtrip(tmp_path):
    s = np.array([0.1, 1 / 3, 1e-300])
    write_scores(s, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "score"
    np.testing.assert_array_equal(read_scores(tmp_path / "s.csv"), s)


def test_stratified_folds_balance():
    y = np.r_[np.ones(23), np.zeros(177)]
    plan = kfold_split(y, 5, seed=1)
    pos = [int(y[plan.valid_rows(f)].sum()) for f in range(5)]
    size = [plan.valid_rows(f).size for f in range(5)]
    assert max(pos) - min(pos) <= 1
    assert max(size) - min(size) <= 1
    assert sorted(np.concatenate([plan.valid_rows(f) for f in range(5)]).tolist()) == list(range(200))
    for f in range(5):
        assert np.intersect1d(plan.train_rows(f), plan.valid_rows(f)).size == 0


def test_folds_are_seeded():
    y = np.r_[np.ones(10), np.zeros(40)]
    a, b, c = (kfold_split(y, 5, s).assignments for s in (3, 3, 4))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_fold_errors():
    with pytest.raises(DataError):
        kfold_split([0, 1, 0, 1], 1, 0)
    with pytest.raises(DataError, match="class 1"):
        kfold_split([1, 0, 0, 0, 0, 0], 3, 0)


def test_balanced_weights():
    w = balanced_weights([1, 0, 0, 0, 0])
    np.testing.assert_array_equal(w, [4, 1, 1, 1, 1])
    assert w[[0]].sum() == w[1:].sum()
    np.testing.assert_array_equal(balanced_weights([1, 1, 0]), [1, 1, 2])
    with pytest.raises(DataError):
        balanced_weights([1, 1])


def test_synth_quota_and_determinism():
    ds = synth_imbalanced(1000, 20, 6, 0.01, seed=7)
    assert int(ds.labels.sum()) == 10
    again = synth_imbalanced(1000, 20, 6, 0.01, seed=7)
    np.testing.assert_array_equal(ds.features, again.features)
    np.testing.assert_array_equal(ds.labels, again.labels)
    with pytest.raises(DataError):
        synth_imbalanced(100, 5, 6, 0.1, 0)
    with pytest.raises(DataError):
        synth_imbalanced(100, 5, 2, 0.001, 0)


def test_synth_signal_lives_in_informative_columns():
    ds = synth_imbalanced(40000, 9, 3, 0.2, seed=0)
    pos, neg = ds.features[ds.labels == 1], ds.features[ds.labels == 0]
    assert pos[:, 0].mean() - neg[:, 0].mean() > 0.2
    assert pos[:, 1].std() / neg[:, 1].std() > 1.2
    assert abs(pos[:, 5].mean() - neg[:, 5].mean()) < 0.05
