import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rulepress.dataio import FoldAssignment, split_folds
from rulepress.penreg import (ConvergenceError, cv_path, fit_path, inverse_link, lambda_index,
                              lambda_max, lambda_sequence, pointwise_loss, select_lambda)
from oracles import grid_lasso, kkt_residual, lasso_instance as instance, lasso_objective


def test_soft_threshold_closed_form():
    x = np.array([1.0, -1.0, 1.0, -1.0])
    y = x.copy()
    path = fit_path(x[:, None], y, lambdas=[1.0, 0.25])
    assert path.coefs[0, 0] == 0.0
    assert path.coefs[1, 0] == pytest.approx(0.75, abs=1e-12)
    assert lambda_max(x[:, None], y) == pytest.approx(1.0, abs=1e-12)


@given(seed=st.integers(0, 100_000), n=st.integers(5, 50), p=st.integers(1, 2))
@settings(max_examples=25, deadline=None)
def test_lasso_matches_grid_search(seed, n, p):
    X, y, w = instance(seed, n, p)
    lams = lambda_sequence(X, y, w, nlambda=8, ratio=0.05)
    path = fit_path(X, y, w, lambdas=lams)
    for k in (1, 4, 7):
        gb, ga, gobj = grid_lasso(X, y, w, lams[k])
        assert np.max(np.abs(path.coefs[k] - gb)) <= 2e-3
        assert lasso_objective(X, y, w, path.intercepts[k], path.coefs[k], lams[k]) <= gobj + 1e-12


@given(seed=st.integers(0, 100_000), n=st.integers(10, 80), p=st.integers(1, 200),
       weighted=st.booleans())
@settings(max_examples=25, deadline=None)
def test_kkt_conditions(seed, n, p, weighted):
    X, y, w = instance(seed, n, p, weighted)
    path = fit_path(X, y, w, nlambda=30)
    for k, lam in enumerate(path.lambdas):
        assert kkt_residual(X, y, w, path.intercepts[k], path.coefs[k], lam) <= 1e-6


def test_elastic_net_kkt():
    X, y, w = instance(3, 60, 15)
    path = fit_path(X, y, w, alpha_mix=0.4, nlambda=20)
    for k, lam in enumerate(path.lambdas):
        assert kkt_residual(X, y, w, path.intercepts[k], path.coefs[k], lam, 0.4) <= 1e-6


def test_lambda_max_zeroes_everything():
    X, y, w = instance(5, 40, 6)
    lmax = lambda_max(X, y, w)
    path = fit_path(X, y, w, lambdas=[2 * lmax, lmax, 0.999 * lmax])
    assert np.all(path.coefs[:2] == 0.0)
    assert np.count_nonzero(path.coefs[2]) >= 1
    assert path.intercepts[0] == pytest.approx(np.mean(y))


def test_unpenalized_limit_is_least_squares():
    X, y, w = instance(8, 10, 3)
    path = fit_path(X, y, lambdas=[1.0, 0.0])
    A = np.column_stack([np.ones(10), X])
    ols = np.linalg.lstsq(A, y, rcond=None)[0]
    np.testing.assert_allclose(np.r_[path.intercepts[1], path.coefs[1]], ols, atol=1e-4)


def test_objective_monotone_along_passes():
    X, y, w = instance(9, 60, 40)
    trace = []
    fit_path(X, y, w, nlambda=15, trace=trace)
    assert len(trace) == 15
    for t in trace:
        assert np.all(np.diff(t) <= 1e-12 * max(1.0, abs(t[0])))


def test_correlated_columns_converge():
    rng = np.random.default_rng(1)
    base = rng.uniform(size=(80, 1)) > 0.5
    X = np.column_stack([base[:, 0], base[:, 0], rng.uniform(size=80) > 0.3]).astype(float)
    y = 2 * X[:, 0] + rng.normal(size=80)
    path = fit_path(X, y, nlambda=40)
    for k, lam in enumerate(path.lambdas):
        assert kkt_residual(X, y, np.ones(80), path.intercepts[k], path.coefs[k], lam) <= 1e-6


def binomial_instance(seed, n=120, p=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = (rng.uniform(size=n) < 1 / (1 + np.exp(-(X[:, 0] - 0.5 * X[:, 1])))).astype(float)
    return X, y


def test_binomial_path():
    X, y = binomial_instance(2)
    path = fit_path(X, y, family="binomial", nlambda=20)
    p = y.mean()
    assert path.intercepts[0] == pytest.approx(math.log(p / (1 - p)), abs=1e-12)
    assert np.all(path.coefs[0] == 0)
    for k, lam in enumerate(path.lambdas):
        mu = inverse_link("binomial", path.intercepts[k] + X @ path.coefs[k])
        g = X.T @ (y - mu) / len(y)
        nz = path.coefs[k] != 0
        assert abs(np.mean(y - mu)) <= 1e-5
        assert np.all(np.abs(g[~nz]) <= lam + 1e-5)
        np.testing.assert_allclose(g[nz], lam * np.sign(path.coefs[k][nz]), atol=1e-5)


def test_binomial_matches_direct_minimization():
    from scipy.optimize import minimize
    X, y = binomial_instance(4, n=80, p=2)
    lam = 0.02
    path = fit_path(X, y, family="binomial", lambdas=[lambda_max(X, y, family="binomial"), lam])

    def obj(t):
        eta = t[0] + X @ t[1:]
        return np.mean(np.logaddexp(0, eta) - y * eta) + lam * np.abs(t[1:]).sum()

    ref = minimize(obj, np.zeros(3), method="Powell", options={"xtol": 1e-10, "ftol": 1e-14})
    assert obj(np.r_[path.intercepts[1], path.coefs[1]]) <= ref.fun + 1e-9
    np.testing.assert_allclose(path.coefs[1], ref.x[1:], atol=1e-3)


def test_poisson_path():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(150, 3))
    y = rng.poisson(np.exp(0.5 + 0.4 * X[:, 0])).astype(float)
    path = fit_path(X, y, family="poisson", nlambda=15)
    assert path.intercepts[0] == pytest.approx(math.log(y.mean()), abs=1e-12)
    assert path.coefs[-1, 0] == pytest.approx(0.4, abs=0.15)


def test_cv_path_matches_manual_computation():
    X, y, w = instance(11, 45, 5, weighted=True)
    folds = split_folds(45, 4, rng=0)
    lams = lambda_sequence(X, y, w, nlambda=10)
    cv = cv_path(X, y, w, "gaussian", 1.0, folds, "mse", lams)
    losses, sizes = [], []
    for f in range(1, 5):
        tr, te = folds.train_rows(f), folds.test_rows(f)
        p = fit_path(X[tr], y[tr], w[tr], lambdas=lams)
        pred = p.intercepts + X[te] @ p.coefs.T
        losses.append(w[te] @ (y[te][:, None] - pred) ** 2 / w[te].sum())
        sizes.append(w[te].sum())
    losses, sizes = np.array(losses), np.array(sizes)
    mean = sizes @ losses / sizes.sum()
    se = np.sqrt(sizes @ (losses - mean) ** 2 / sizes.sum() / 3)
    np.testing.assert_allclose(cv.mean_loss, mean, rtol=1e-12)
    np.testing.assert_allclose(cv.se, se, rtol=1e-10)
    assert cv.lambda_1se >= cv.lambda_min
    k = cv.index_min
    assert cv.mean_loss[cv.index_1se] <= cv.mean_loss[k] + cv.se[k]
    assert np.all(cv.mean_loss[:cv.index_1se] > cv.mean_loss[k] + cv.se[k])


def test_cv_rejects_single_class_fold():
    X, _ = binomial_instance(5, n=40)
    y = np.zeros(40)
    y[:3] = 1
    fold = np.arange(40) % 4 + 1
    fold[:3] = 1
    folds = FoldAssignment(fold, 4, False)
    with pytest.raises(ValueError, match="single class"):
        cv_path(X, y, None, "binomial", 1.0, folds, nlambda=5)


def test_select_lambda_criteria():
    X, y, w = instance(12, 40, 3)
    lams = lambda_sequence(X, y, w, nlambda=6)
    cv = cv_path(X, y, w, "gaussian", 1.0, split_folds(40, 5, rng=1), lambdas=lams)
    assert select_lambda(cv, "lambda.min") == cv.lambda_min
    assert select_lambda(cv, float(lams[3])) == lams[3]
    assert lambda_index(lams, lams[2]) == 2
    with pytest.raises(ValueError, match="not on the grid"):
        select_lambda(cv, 12345.0)
    with pytest.raises(ValueError):
        select_lambda(cv, "lambda.best")


def test_pointwise_losses():
    y = np.array([0.0, 1.0])
    mu = np.array([0.2, 0.6])
    np.testing.assert_allclose(pointwise_loss("deviance", "gaussian", y, mu), [0.04, 0.16])
    np.testing.assert_allclose(pointwise_loss("deviance", "binomial", y, mu),
                               [-2 * math.log(0.8), -2 * math.log(0.6)])
    np.testing.assert_allclose(pointwise_loss("mae", "gaussian", y, mu), [0.2, 0.4])
    np.testing.assert_array_equal(pointwise_loss("class", "binomial", y, mu), [0, 0])
    np.testing.assert_allclose(pointwise_loss("deviance", "poisson", np.array([0.0, 2.0]),
                                              np.array([1.0, 2.0])), [2.0, 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        pointwise_loss("class", "gaussian", y, mu)


def test_orthogonal_response_rejected():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    with pytest.raises(ValueError, match="lambda_max is 0"):
        lambda_max(X, np.array([1.0, 1.0, 3.0, 3.0]))


def test_nonconvergence_reports_index():
    X, y, w = instance(13, 50, 20)
    with pytest.raises(ConvergenceError) as err:
        fit_path(X, y, w, nlambda=10, max_sweeps=1)
    assert err.value.lambda_index >= 1
