"""Elastic-net penalized GLMs: lambda paths, cross-validation, lambda selection.

For each lambda the solver minimizes

    (1/N) sum_i w_i L(y_i, a0 + x_i' b) + lambda * (alpha * |b|_1 + (1 - alpha)/2 * |b|_2^2)

with L half the squared residual (gaussian) or the negative log-likelihood
(binomial, poisson); case weights are rescaled to mean 1. The intercept is
unpenalized. Non-gaussian families use penalized iteratively reweighted
least squares with the coordinate-descent kernel inside.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _cd
from .rulegen import BINOMIAL, GAUSSIAN, POISSON, check_family

INNER_TOL = 1e-7
OUTER_TOL = 1e-8
MAX_SWEEPS = 100_000
MAX_IRLS = 100
MU_EPS = 1e-5
ETA_MAX = 700.0

MEASURES = ("deviance", "mse", "mae", "class")
MEASURE_LABELS = {
    "deviance": {GAUSSIAN: "Mean-Squared Error", BINOMIAL: "Binomial Deviance",
                 POISSON: "Poisson Deviance"},
    "mse": "Mean-Squared Error",
    "mae": "Mean Absolute Error",
    "class": "Misclassification Error",
}


class ConvergenceError(RuntimeError):
    def __init__(self, lambda_index: int, lam: float):
        super().__init__(f"coordinate descent did not converge at lambda index {lambda_index} "
                         f"(lambda={lam:.6g})")
        self.lambda_index = lambda_index


@dataclass
class LambdaPath:
    lambdas: np.ndarray
    intercepts: np.ndarray
    coefs: np.ndarray          # (n_lambda, p)
    alpha_mix: float
    family: str
    n_sweeps: np.ndarray

    def nonzero(self) -> np.ndarray:
        return np.count_nonzero(self.coefs, axis=1)

    def index_of(self, lam: float) -> int:
        return lambda_index(self.lambdas, lam)

    def link(self, X, k: int) -> np.ndarray:
        return self.intercepts[k] + X @ self.coefs[k]


@dataclass
class CVResult:
    lambdas: np.ndarray
    mean_loss: np.ndarray
    se: np.ndarray
    measure: str
    nfolds: int

    @property
    def index_min(self) -> int:
        return int(np.argmin(self.mean_loss))

    @property
    def index_1se(self) -> int:
        k = self.index_min
        bound = self.mean_loss[k] + self.se[k]
        return int(np.flatnonzero(self.mean_loss <= bound)[0])

    @property
    def lambda_min(self) -> float:
        return float(self.lambdas[self.index_min])

    @property
    def lambda_1se(self) -> float:
        return float(self.lambdas[self.index_1se])


def _norm_weights(weights, n):
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    return w / w.sum()


def _null_mean(family, y, v):
    mu = float(v @ y)
    if family == BINOMIAL and not 0 < mu < 1:
        raise ValueError("binomial response needs both classes present")
    if family == POISSON and mu <= 0:
        raise ValueError("poisson response has mean 0")
    return mu


def _link(family, mu):
    if family == BINOMIAL:
        return math.log(mu / (1 - mu))
    if family == POISSON:
        return math.log(mu)
    return mu


def inverse_link(family, eta):
    eta = np.asarray(eta, dtype=np.float64)
    if family == BINOMIAL:
        return 1.0 / (1.0 + np.exp(-eta))
    if family == POISSON:
        return np.exp(np.minimum(eta, ETA_MAX))
    return eta


def lambda_max(X, y, weights=None, family=GAUSSIAN, alpha_mix=1.0) -> float:
    """Smallest lambda at which every penalized coefficient is zero."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_family(family, y)
    v = _norm_weights(weights, y.shape[0])
    if X.shape[1] == 0 or not np.any(X):
        raise ValueError("design matrix has no nonzero columns")
    mu = _null_mean(family, y, v)
    g = np.abs(X.T @ (v * (y - mu)))
    lmax = float(g.max()) / max(alpha_mix, 1e-3)
    if not lmax > 1e-14 * max(1.0, float(np.abs(y).max())):
        raise ValueError("response orthogonal to design: lambda_max is 0")
    return lmax


def lambda_sequence(X, y, weights=None, family=GAUSSIAN, alpha_mix=1.0, nlambda=100,
                    ratio=None) -> np.ndarray:
    """Geometric grid from lambda_max down to ``ratio * lambda_max``."""
    if nlambda < 1:
        raise ValueError("nlambda must be >= 1")
    X = np.asarray(X)
    lmax = lambda_max(X, y, weights, family, alpha_mix)
    if ratio is None:
        ratio = 1e-4 if X.shape[0] > X.shape[1] else 1e-2
    if nlambda == 1:
        return np.array([lmax])
    return lmax * np.exp(np.linspace(0.0, math.log(ratio), nlambda))


def _solve_screened(Xc, r, u, xx, l1, l2, beta, l1_prev, tol, max_sweeps, buf):
    """Coordinate descent on a strong-rule screened column set plus KKT repair.

    Columns left out are checked against the optimality conditions afterwards
    and violators are added until none remain.
    """
    g = Xc.T @ (u * r)
    usable = xx > 0
    inside = usable & ((np.abs(g) >= 2 * l1 - l1_prev) | (beta != 0))
    total = 0
    while True:
        cols = np.flatnonzero(inside)
        s = _cd.solve_wls(Xc, r, u, xx, l1, l2, beta, cols, tol, max_sweeps - total, buf[total:])
        if s < 0:
            return -1
        total += s
        g = Xc.T @ (u * r)
        viol = usable & ~inside & (np.abs(g) > l1 * (1 + 1e-12))
        if not viol.any():
            return total
        inside |= viol


def _center(X, u):
    s = u.sum()
    means = (u @ X) / s
    return np.asfortranarray(X - means), means


def fit_path(X, y, weights=None, family=GAUSSIAN, alpha_mix=1.0, lambdas=None, nlambda=100,
             tol=INNER_TOL, max_sweeps=MAX_SWEEPS, trace=None) -> LambdaPath:
    """Warm-started coordinate-descent solutions along a decreasing lambda grid.

    ``trace``, when a list, receives one array per lambda holding the
    penalized (quadratic-approximation) objective after every pass.
    """
    X = np.asfortranarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    check_family(family, y)
    if not 0 <= alpha_mix <= 1:
        raise ValueError("alpha_mix must lie in [0, 1]")
    n, p = X.shape
    v = _norm_weights(weights, n)
    if lambdas is None:
        lambdas = lambda_sequence(X, y, weights, family, alpha_mix, nlambda)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(lambdas < 0) or np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be nonnegative and strictly decreasing")

    L = lambdas.shape[0]
    intercepts = np.zeros(L)
    coefs = np.zeros((L, p))
    sweeps = np.zeros(L, dtype=np.int64)
    beta = np.zeros(p)
    mu0 = _null_mean(family, y, v)
    a0 = _link(family, mu0)
    empty = np.zeros(0)

    if family == GAUSSIAN:
        Xc, means = _center(X, v)
        xx = _cd.weighted_gram_diag(Xc, v)
        r = y - mu0
        for k, lam in enumerate(lambdas):
            buf = np.full(4096, np.nan) if trace is not None else empty
            prev = lambdas[k - 1] if k else lam
            s = _solve_screened(Xc, r, v, xx, lam * alpha_mix, lam * (1 - alpha_mix), beta,
                                prev * alpha_mix, tol, max_sweeps, buf)
            if s < 0:
                raise ConvergenceError(k, lam)
            if trace is not None:
                trace.append(buf[~np.isnan(buf)])
            coefs[k] = beta
            intercepts[k] = mu0 - means @ beta
            sweeps[k] = s
        return LambdaPath(lambdas, intercepts, coefs, alpha_mix, family, sweeps)

    for k, lam in enumerate(lambdas):
        dev_old = math.inf
        total = 0
        for _ in range(MAX_IRLS):
            eta = a0 + X @ beta
            mu = inverse_link(family, eta)
            if family == BINOMIAL:
                mu = np.clip(mu, MU_EPS, 1 - MU_EPS)
                var = mu * (1 - mu)
            else:
                var = np.maximum(mu, 1e-10)
            z = eta + (y - mu) / var
            u = v * var
            Xc, means = _center(X, u)
            xx = _cd.weighted_gram_diag(Xc, u)
            zbar = (u @ z) / u.sum()
            r = z - zbar - Xc @ beta
            buf = np.full(4096, np.nan) if trace is not None else empty
            prev = lambdas[k - 1] if k else lam
            s = _solve_screened(Xc, r, u, xx, lam * alpha_mix, lam * (1 - alpha_mix), beta,
                                prev * alpha_mix, tol, max_sweeps, buf)
            if s < 0:
                raise ConvergenceError(k, lam)
            if trace is not None:
                trace.append(buf[~np.isnan(buf)])
            total += s
            a0 = zbar - means @ beta
            dev = deviance(family, y, inverse_link(family, a0 + X @ beta), v)
            if abs(dev - dev_old) <= OUTER_TOL * (abs(dev) + 0.1):
                break
            dev_old = dev
        else:
            warnings.warn(f"IRLS reached {MAX_IRLS} iterations at lambda index {k}")
        coefs[k] = beta
        intercepts[k] = a0
        sweeps[k] = total
    return LambdaPath(lambdas, intercepts, coefs, alpha_mix, family, sweeps)


# -- losses ------------------------------------------------------------------

def _xlogy(x, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0) / y), 0.0)


def pointwise_loss(measure, family, y, mu) -> np.ndarray:
    """Per-row loss of response-scale predictions ``mu``."""
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if measure == "deviance":
        if family == GAUSSIAN:
            return (y - mu) ** 2
        if family == BINOMIAL:
            m = np.clip(mu, MU_EPS, 1 - MU_EPS)
            return -2.0 * (y * np.log(m) + (1 - y) * np.log(1 - m))
        return 2.0 * (_xlogy(y, mu) - (y - mu))
    if measure == "mse":
        return (y - mu) ** 2
    if measure == "mae":
        return np.abs(y - mu)
    if measure == "class":
        if family != BINOMIAL:
            raise ValueError("measure 'class' applies to the binomial family only")
        return ((mu > 0.5).astype(np.float64) != y).astype(np.float64)
    raise ValueError(f"unknown measure {measure!r}; choose from {', '.join(MEASURES)}")


def deviance(family, y, mu, v) -> float:
    return float(v @ pointwise_loss("deviance", family, y, mu))


def measure_label(measure, family) -> str:
    lab = MEASURE_LABELS[measure]
    return lab[family] if isinstance(lab, dict) else lab


# -- cross-validation --------------------------------------------------------

def cv_path(X, y, weights, family, alpha_mix, folds, measure="deviance", lambdas=None,
            nlambda=100, threads=1) -> CVResult:
    """K-fold cross-validated loss along a shared lambda grid."""
    X = np.asfortranarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    pointwise_loss(measure, family, y[:1], y[:1])
    if lambdas is None:
        lambdas = lambda_sequence(X, y, w, family, alpha_mix, nlambda)
    lambdas = np.asarray(lambdas, dtype=np.float64)

    def run(f):
        tr, te = folds.train_rows(f), folds.test_rows(f)
        if family == BINOMIAL:
            m = y[tr].mean()
            if m == 0 or m == 1:
                raise ValueError(f"fold {f} training part has a single class; "
                                 "use stratified folds")
        path = fit_path(X[tr], y[tr], w[tr], family, alpha_mix, lambdas)
        eta = path.intercepts[None, :] + X[te] @ path.coefs.T
        loss = pointwise_loss(measure, family, y[te][:, None], inverse_link(family, eta))
        wt = w[te]
        return wt @ loss / wt.sum(), wt.sum()

    fold_ids = range(1, folds.k + 1)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, fold_ids))
    else:
        results = [run(f) for f in fold_ids]
    per_fold = np.array([r[0] for r in results])
    fw = np.array([r[1] for r in results])
    mean = fw @ per_fold / fw.sum()
    var = fw @ (per_fold - mean) ** 2 / fw.sum() / (folds.k - 1)
    return CVResult(lambdas, mean, np.sqrt(var), measure, folds.k)


def lambda_index(lambdas, lam: float) -> int:
    lambdas = np.asarray(lambdas)
    hit = np.flatnonzero(np.isclose(lambdas, lam, rtol=1e-12, atol=0.0) | (lambdas == lam))
    if hit.size == 0:
        raise ValueError(f"lambda {lam} is not on the grid "
                         f"[{lambdas[0]:.6g} ... {lambdas[-1]:.6g}]")
    return int(hit[0])


def select_lambda(cv: CVResult, criterion="lambda.1se") -> float:
    """Resolve ``"lambda.1se"``, ``"lambda.min"`` or a grid value to a lambda."""
    if criterion == "lambda.1se":
        return cv.lambda_1se
    if criterion == "lambda.min":
        return cv.lambda_min
    if isinstance(criterion, str):
        try:
            criterion = float(criterion)
        except ValueError:
            raise ValueError(f"unknown lambda criterion {criterion!r}") from None
    if criterion < 0:
        raise ValueError("lambda must be >= 0")
    return float(cv.lambdas[lambda_index(cv.lambdas, criterion)])
