"""Full-pipeline cross-validation, AUC and a synthetic benchmark generator."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .config import FitSettings
from .dataio import ColumnSchema, CONTINUOUS, Dataset, split_folds
from .ensemble import fit as fit_ensemble
from .penreg import MU_EPS
from .rulegen import BINOMIAL, POISSON


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = labels.shape[0] - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def gen_friedman1(n: int, p: int = 10, noise_sd: float = 1.0, seed=0) -> Dataset:
    """Uniform inputs with y = 10 sin(pi x1 x2) + 20 (x3 - .5)^2 + 10 x4 + 5 x5 + noise."""
    if p < 5:
        raise ValueError("gen_friedman1 needs p >= 5")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    y = friedman1_mean(X) + rng.normal(0.0, noise_sd, size=n)
    names = [f"x{j + 1}" for j in range(p)]
    schema = [ColumnSchema(c, CONTINUOUS) for c in names + ["y"]]
    cols = {c: X[:, j] for j, c in enumerate(names)}
    cols["y"] = y
    return Dataset(schema, cols, "y")


def friedman1_mean(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
            + 10 * X[:, 3] + 5 * X[:, 4])


@dataclass
class CVReport:
    family: str
    k: int
    seed: object
    y: np.ndarray
    predictions: np.ndarray          # response scale, out of fold
    folds: np.ndarray                # 1-based fold of each row
    metrics: dict = field(default_factory=dict)   # name -> (value, se)

    def to_json(self) -> str:
        return json.dumps({"family": self.family, "k": self.k, "seed": self.seed,
                           "metrics": {m: {"value": _finite(v), "se": _finite(s)}
                                       for m, (v, s) in self.metrics.items()}}, indent=1)

    def write_predictions(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["row_id", "fold", "observed", "prediction"])
            for i in range(self.y.shape[0]):
                w.writerow([i + 1, int(self.folds[i]), repr(float(self.y[i])),
                            repr(float(self.predictions[i]))])

    def summary(self) -> str:
        lines = [f"{self.k}-fold cross-validation ({self.family})"]
        for m, (v, s) in self.metrics.items():
            lines.append(f"  {m:<16} {v:.6g}  (se {s:.6g})")
        return "\n".join(lines)


def _finite(x):
    return x if math.isfinite(x) else None


def _pooled(values, w, rows) -> float:
    return float(np.sum(w[rows] * values[rows]) / np.sum(w[rows]))


def _binomial_dev(y, mu):
    mu = np.clip(mu, MU_EPS, 1 - MU_EPS)
    return -2 * (y * np.log(mu) + (1 - y) * np.log(1 - mu))


def _poisson_dev(y, mu):
    mu = np.maximum(mu, 1e-10)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(y > 0, y * np.log(y / mu), 0.0)
    return 2 * (t - (y - mu))


def cross_validate(settings: FitSettings, data: Dataset, k: int = 10, seed=0, fit=None,
                   threads: int = 1) -> CVReport:
    """Out-of-fold predictions from refitting the whole pipeline on each training part.

    ``fit`` maps (training Dataset, settings) to an object with
    ``predict(data, scale)``; the ensemble fit is used by default.
    """
    if fit is None:
        def fit(train, s):
            return fit_ensemble(train, s, threads=threads)
    y = data.y
    w = data.weights
    binomial = settings.family == BINOMIAL
    folds = split_folds(data.n_rows, k, stratify=binomial,
                        rng=np.random.default_rng(np.random.SeedSequence(seed)), y=y)
    pred = np.empty(data.n_rows)
    for f in range(1, k + 1):
        train, test = folds.train_rows(f), folds.test_rows(f)
        model = fit(data.take(train), settings)
        pred[test] = model.predict(data.take(test), "response")

    groups = [folds.test_rows(f) for f in range(1, k + 1)]
    all_rows = np.arange(data.n_rows)

    def metric(values):
        per_fold = np.array([_pooled(values, w, g) for g in groups])
        return _pooled(values, w, all_rows), float(np.std(per_fold, ddof=1) / np.sqrt(k))

    metrics = {"MSE": metric((y - pred) ** 2), "MAE": metric(np.abs(y - pred))}
    if binomial:
        metrics["deviance"] = metric(_binomial_dev(y, pred))
        metrics["misclassification"] = metric(((pred > 0.5) != (y == 1)).astype(np.float64))
        per_fold = []
        for g in groups:
            try:
                per_fold.append(auc(pred[g], y[g]))
            except ValueError:
                pass
        se = float(np.std(per_fold, ddof=1) / np.sqrt(len(per_fold))) if len(per_fold) > 1 \
            else float("nan")
        metrics["AUC"] = (auc(pred, y), se)
    elif settings.family == POISSON:
        metrics["deviance"] = metric(_poisson_dev(y, pred))
    return CVReport(settings.family, k, seed, y.copy(), pred, folds.fold_of_row.copy(), metrics)
