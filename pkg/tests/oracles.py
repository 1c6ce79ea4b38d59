"""Independent reference computations used by several test modules."""

import numpy as np


def lasso_instance(seed, n, p, weighted=False):
    """Sparse gaussian regression problem with weights summing to n."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p) * (rng.uniform(size=p) < 0.5)
    y = X @ beta + rng.normal(size=n)
    w = rng.uniform(0.5, 1.5, n) if weighted else np.ones(n)
    return X, y, w * n / w.sum()


def lasso_objective(X, y, w, a0, beta, lam, alpha_mix=1.0):
    """(1/sum w) sum w * 0.5 (y - a0 - X beta)^2 + elastic-net penalty."""
    r = y - a0 - X @ beta
    v = w / w.sum()
    pen = lam * (alpha_mix * np.abs(beta).sum() + 0.5 * (1 - alpha_mix) * beta @ beta)
    return 0.5 * v @ (r * r) + pen


def grid_lasso(X, y, w, lam, lo=-10.0, hi=10.0, points=81, rounds=14):
    """Minimize the gaussian lasso objective by a zooming dense grid.

    The intercept is profiled out exactly (weighted mean of the residual).
    """
    p = X.shape[1]
    v = w / w.sum()
    center = np.zeros(p)
    half = np.full(p, (hi - lo) / 2)
    center += (hi + lo) / 2
    best = None
    for _ in range(rounds):
        axes = [np.linspace(center[j] - half[j], center[j] + half[j], points) for j in range(p)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, p)
        fitted = mesh @ X.T                       # (G, N)
        a0 = (y - fitted) @ v
        r = y[None, :] - a0[:, None] - fitted
        obj = 0.5 * (r * r) @ v + lam * np.abs(mesh).sum(axis=1)
        k = int(np.argmin(obj))
        best = mesh[k], a0[k], obj[k]
        center = mesh[k]
        half = half * 4 / (points - 1)
    return best


def kkt_residual(X, y, w, a0, beta, lam, alpha_mix=1.0):
    """Largest violation of the gaussian elastic-net stationarity conditions."""
    v = w / w.sum()
    r = y - a0 - X @ beta
    g = X.T @ (v * r)
    worst = abs(v @ r)
    for j in range(X.shape[1]):
        if beta[j] == 0:
            worst = max(worst, abs(g[j]) - lam * alpha_mix)
        else:
            target = lam * (alpha_mix * np.sign(beta[j]) + (1 - alpha_mix) * beta[j])
            worst = max(worst, abs(g[j] - target))
    return worst


def h_squared_direct(predict, X, j):
    """H^2 for column ``j`` by explicit substitution over all row pairs.

    ``predict`` maps an (m, p) array to m predictions.
    """
    n = X.shape[0]
    F = predict(X)
    Fj = np.empty(n)
    Fnot = np.empty(n)
    for i in range(n):
        Z = X.copy()
        Z[:, j] = X[i, j]
        Fj[i] = predict(Z).mean()
        Z = np.repeat(X[i:i + 1], n, axis=0)
        Z[:, j] = X[:, j]
        Fnot[i] = predict(Z).mean()
    F, Fj, Fnot = F - F.mean(), Fj - Fj.mean(), Fnot - Fnot.mean()
    return max(0.0, np.sum((F - Fj - Fnot) ** 2) / np.sum(F * F))
