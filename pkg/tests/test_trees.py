import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rulepress.dataio import CONTINUOUS, UNORDERED, ColumnSchema, Dataset, from_arrays
from rulepress.trees import (CART, UNBIASED, FeatureMatrix, TreeConfig, apply_tree,
                             association_pvalues, grow_tree, predict_tree, select_split)


def sse(y, w):
    m = w @ y / w.sum()
    return w @ (y - m) ** 2


def brute_force_best(X, y, w, minbucket):
    """Largest SSE reduction over every (column, observed cut) pair."""
    best = -np.inf
    base = sse(y, w)
    for j in range(X.shape[1]):
        for v in np.unique(X[:, j])[:-1]:
            left = X[:, j] <= v
            if left.sum() < minbucket or (~left).sum() < minbucket:
                continue
            best = max(best, base - sse(y[left], w[left]) - sse(y[~left], w[~left]))
    return best


def split_gain(X, y, w, spec, names):
    j = names.index(spec.variable)
    left = X[:, j] <= spec.cut
    return sse(y, w) - sse(y[left], w[left]) - sse(y[~left], w[~left])


@given(seed=st.integers(0, 10_000), n=st.integers(20, 60), p=st.integers(1, 4),
       minbucket=st.integers(1, 8))
@settings(max_examples=60, deadline=None)
def test_cart_split_matches_brute_force(seed, n, p, minbucket):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, p)), 1)
    y = rng.normal(size=n) + X[:, 0]
    w = rng.uniform(0.5, 2.0, n)
    d = from_arrays(X, y)
    fm = FeatureMatrix(d)
    cfg = TreeConfig(mode=CART, minsplit=2 * minbucket, minbucket=minbucket)
    spec = select_split(fm, np.arange(n), y, w, cfg)
    best = brute_force_best(X, y, w, minbucket)
    if spec is None:
        assert best <= 1e-12 * sse(y, w) or best == -np.inf
        return
    assert abs(split_gain(X, y, w, spec, fm.names) - best) <= 1e-12 * max(1.0, sse(y, w))
    j = fm.names.index(spec.variable)
    assert spec.cut in X[:, j]


def test_nominal_split_matches_subset_search():
    rng = np.random.default_rng(4)
    n, levels = 80, ("a", "b", "c", "d", "e")
    g = rng.integers(0, 5, n)
    y = np.array([0.0, 3.0, -1.0, 2.5, 0.5])[g] + rng.normal(size=n)
    w = np.ones(n)
    d = Dataset([ColumnSchema("g", UNORDERED, levels), ColumnSchema("y", CONTINUOUS)],
                {"g": g, "y": y}, "y")
    spec = select_split(FeatureMatrix(d), np.arange(n), y, w, TreeConfig(mode=CART, minbucket=1,
                                                                         minsplit=2))
    best = -np.inf
    for r in range(1, 5):
        for subset in itertools.combinations(range(5), r):
            left = np.isin(g, subset)
            best = max(best, sse(y, w) - sse(y[left], w[left]) - sse(y[~left], w[~left]))
    left = np.isin(g, [levels.index(l) for l in spec.left_levels])
    got = sse(y, w) - sse(y[left], w[left]) - sse(y[~left], w[~left])
    assert got == pytest.approx(best, abs=1e-10)


def test_association_pvalues_match_scipy(mixed_data):
    fm = FeatureMatrix(mixed_data, ordinal_as_continuous=True)
    y = mixed_data.y
    rows = np.arange(mixed_data.n_rows)
    p = association_pvalues(fm, np.arange(fm.p), rows, y, np.ones_like(y))
    groups = [y[mixed_data.codes("g") == k] for k in range(3)]
    assert p[0] == pytest.approx(stats.f_oneway(*groups).pvalue, rel=1e-8)
    assert p[1] == pytest.approx(stats.pearsonr(mixed_data.numeric("x"), y)[1], rel=1e-8)
    assert p[2] == pytest.approx(stats.pearsonr(mixed_data.numeric("o"), y)[1], rel=1e-8)


def test_unbiased_stops_without_association():
    rng = np.random.default_rng(1)
    d = from_arrays(rng.normal(size=(100, 3)), rng.normal(size=100))
    t = grow_tree(d, d.y, config=TreeConfig(mode=UNBIASED, alpha=1e-6))
    assert t.is_leaf


def test_unbiased_finds_signal():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 3))
    y = 3.0 * (X[:, 2] > 0) + rng.normal(scale=0.5, size=200)
    t = grow_tree(from_arrays(X, y), y, config=TreeConfig(maxdepth=1))
    assert t.split.variable == "x3" and abs(t.split.cut) < 0.3


@given(seed=st.integers(0, 1000), depth=st.integers(1, 4), minbucket=st.integers(1, 10))
@settings(max_examples=30, deadline=None)
def test_tree_structure_invariants(seed, depth, minbucket):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(120, 3))
    y = X[:, 0] ** 2 + X[:, 1] + rng.normal(scale=0.2, size=120)
    d = from_arrays(X, y)
    cfg = TreeConfig(maxdepth=depth, mode=CART, minbucket=minbucket, minsplit=2 * minbucket)
    t = grow_tree(d, y, config=cfg)
    assert t.max_depth() <= depth
    ids = [n.id for n in t.nodes()]
    assert ids == list(range(len(ids)))
    for n in t.nodes():
        if n.is_leaf:
            assert n.n_node >= minbucket or n is t
    fitted = apply_tree(t, d)
    rows = [predict_tree(t, d.row(i)) for i in range(0, 120, 7)]
    np.testing.assert_array_equal(fitted[::7], rows)


def test_constant_response_gives_leaf():
    d = from_arrays(np.arange(40.0)[:, None], np.ones(40))
    t = grow_tree(d, d.y, config=TreeConfig(mode=CART))
    assert t.is_leaf and t.prediction == 1.0


def test_categorical_tree_predictions(mixed_data):
    t = grow_tree(mixed_data, mixed_data.y, config=TreeConfig(maxdepth=2))
    assert not t.is_leaf
    fitted = apply_tree(t, mixed_data)
    fm_fitted = apply_tree(t, FeatureMatrix(mixed_data))
    np.testing.assert_array_equal(fitted, fm_fitted)


def test_mtry_restricts_candidates():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 5))
    y = 5 * X[:, 0] + rng.normal(size=100)
    chosen = set()
    for s in range(30):
        spec = select_split(FeatureMatrix(from_arrays(X, y)), np.arange(100), y, np.ones(100),
                            TreeConfig(mode=CART, mtry=1), rng=s)
        chosen.add(spec.variable)
    assert len(chosen) > 1


def test_config_validation():
    with pytest.raises(ValueError):
        TreeConfig(minsplit=10, minbucket=7)
    with pytest.raises(ValueError):
        TreeConfig(mode="gini")
    with pytest.raises(ValueError):
        TreeConfig(alpha=0)
