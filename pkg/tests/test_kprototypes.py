import numpy as np
import pytest

from matnet.clustering import KPrototypes, kprototypes_distance, mixed_cost
from matnet.clustering.kprototypes import _fit_once
from matnet._validation import check_mixed, encode_categories

from _builders import best_two_partition_cost, two_blob_mixed


def random_mixed(rng, n=40):
    num = rng.normal(size=(n, 3)) * rng.uniform(0.5, 3.0, 3)
    cat = rng.integers(0, 4, (n, 2))
    return np.column_stack([num, cat]).astype(object)


def test_distance_definition():
    num, cat = np.array([0.0, 0.0]), np.array([1, 2])
    assert kprototypes_distance(num, cat, [1.0, 2.0], [1, 3], gamma=0.5) == 5.5
    assert kprototypes_distance(num, cat, [0.0, 0.0], [0, 0], gamma=0.5) == 1.0
    with pytest.raises(ValueError):
        kprototypes_distance(num, cat, [1.0], [1, 3], gamma=0.5)


def test_cost_never_increases_between_sweeps():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = random_mixed(rng)
        x_num, x_cat_raw, _, _ = check_mixed(X, [3, 4])
        x_cat, vocabs = encode_categories(x_cat_raw)
        _, _, _, history, _, _ = _fit_once(x_num, x_cat, [len(v) for v in vocabs], 4, 0.7, 100, rng)
        assert np.all(np.diff(history) <= 1e-9 * max(history))


def test_two_blobs_recovered_and_optimal():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X, truth = two_blob_mixed(rng, int(rng.integers(5, 11)))
        km = KPrototypes(2, gamma=1.0, categorical=[2, 3], random_state=seed).fit(X)
        same = km.labels_ == km.labels_[0]
        assert np.array_equal(same, truth == truth[0])
        assert km.cost_ == pytest.approx(best_two_partition_cost(X, [2, 3], 1.0), rel=1e-12)


def test_fitted_cost_equals_mixed_cost_of_labels():
    rng = np.random.default_rng(4)
    X = random_mixed(rng, 30)
    km = KPrototypes(3, categorical=[3, 4], random_state=0).fit(X)
    assert km.cost_ == pytest.approx(mixed_cost(X, km.labels_, [3, 4], km.gamma_), rel=1e-10)
    assert km.cost(X, km.labels_) == pytest.approx(km.cost_, rel=1e-10)
    np.testing.assert_array_equal(km.predict(X), km.labels_)


def test_deterministic_for_fixed_seed():
    X = random_mixed(np.random.default_rng(1))
    a = KPrototypes(3, categorical=[3, 4], random_state=5).fit(X)
    b = KPrototypes(3, categorical=[3, 4], random_state=5).fit(X)
    np.testing.assert_array_equal(a.labels_, b.labels_)
    assert a.cost_history_ == b.cost_history_


def test_identical_records_single_prototype():
    X = np.array([[1.0, "a"]] * 6, dtype=object)
    km = KPrototypes(2, categorical=[1], random_state=0).fit(X)
    assert km.cost_ == 0.0


def test_numeric_only_and_categorical_only():
    rng = np.random.default_rng(2)
    num = np.vstack([rng.normal(size=(5, 2)), rng.normal(size=(5, 2)) + 10])
    km = KPrototypes(2, random_state=0).fit(num)
    assert len(set(km.labels_[:5])) == 1 and km.labels_[0] != km.labels_[5]
    cat = np.array([["a", "x"]] * 4 + [["b", "y"]] * 4, dtype=object)
    km = KPrototypes(2, categorical=[0, 1], random_state=0).fit(cat)
    assert km.cost_ == 0.0
    assert km.gamma_ == 1.0


def test_validation_errors():
    X = random_mixed(np.random.default_rng(0), 5)
    with pytest.raises(ValueError):
        KPrototypes(6, categorical=[3, 4]).fit(X)
    with pytest.raises(ValueError):
        KPrototypes(0, categorical=[3, 4]).fit(X)
    with pytest.raises(ValueError):
        KPrototypes(2, gamma=-1.0, categorical=[3, 4]).fit(X)
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        KPrototypes(2, categorical=[3, 4]).fit(bad)


def test_unseen_category_rejected_by_predict():
    X = random_mixed(np.random.default_rng(0), 10)
    km = KPrototypes(2, categorical=[3, 4], random_state=0).fit(X)
    Y = X.copy()
    Y[0, 3] = 99
    with pytest.raises(ValueError):
        km.predict(Y)
