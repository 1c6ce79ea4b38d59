"""Importances, partial dependence and interaction statistics for fitted ensembles."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .dataio import DataError, Dataset
from .ensemble import EnsembleModel
from .penreg import inverse_link
from .rulegen import BINOMIAL, GAUSSIAN, POISSON
from .rules import Rule

PD_MAX_POINTS = 40
NULL_QUANTILES = (0.05, 0.5, 0.95)


# -- importances ---------------------------------------------------------------

@dataclass
class ImportanceReport:
    learners: list[dict]
    variables: list[tuple[str, float]]
    standardized: bool = False
    n_rows: int = 0
    response_sd: float | None = None

    @property
    def total(self) -> float:
        return float(sum(r["importance"] for r in self.learners))

    def to_rows(self) -> list[dict]:
        rows = [{"level": "learner", "name": r["name"], "description": r["description"],
                 "coefficient": r["coefficient"], "sd": r["sd"], "importance": r["importance"]}
                for r in self.learners]
        rows += [{"level": "variable", "name": v, "description": "", "coefficient": "",
                  "sd": "", "importance": imp} for v, imp in self.variables]
        return rows

    def to_json(self) -> str:
        return json.dumps({"standardized": self.standardized, "n_rows": self.n_rows,
                           "response_sd": self.response_sd, "learners": self.learners,
                           "variables": [{"variable": v, "importance": i}
                                         for v, i in self.variables]}, indent=1)


_REL = re.compile(r"^\s*([^<>=!]+?)\s*(<=|>=|==|!=|<|>)\s*([^<>=!&]+?)\s*$")


def parse_subregion(expr: str):
    """Row predicate from text such as ``"x1 > 0.5 & g == a"``."""
    terms = []
    for part in expr.split("&"):
        m = _REL.match(part)
        if not m:
            raise ValueError(f"cannot parse subregion condition {part.strip()!r}")
        terms.append(m.groups())

    def predicate(data: Dataset) -> np.ndarray:
        out = np.ones(data.n_rows, dtype=bool)
        for name, op, value in terms:
            col = data.column_schema(name)
            if col.is_categorical and op in ("==", "!="):
                if value not in col.levels:
                    raise DataError(f"unknown level {value!r} for column {name!r}")
                hit = data.codes(name) == col.levels.index(value)
                out &= hit if op == "==" else ~hit
                continue
            if col.is_categorical and value in col.levels:
                v = col.levels.index(value) + 1.0
            else:
                v = float(value)
            x = data.numeric(name)
            out &= {"<=": x <= v, ">=": x >= v, "<": x < v, ">": x > v,
                    "==": x == v, "!=": x != v}[op]
        return out

    return predicate


def _region_mask(data: Dataset, subregion) -> np.ndarray:
    if subregion is None:
        return np.ones(data.n_rows, dtype=bool)
    if isinstance(subregion, str):
        subregion = parse_subregion(subregion)
    mask = subregion(data) if callable(subregion) else np.asarray(subregion)
    if mask.dtype != bool:
        raise ValueError("subregion must give a boolean row mask")
    if mask.shape != (data.n_rows,):
        raise ValueError(f"subregion mask must have length {data.n_rows}")
    return mask


def importance(model: EnsembleModel, data: Dataset, standardize: bool = False,
               subregion=None, round: int | None = None) -> ImportanceReport:
    """Learner and input-variable importances over ``data`` or a subregion of it.

    Rules score ``|a| * sqrt(s (1 - s))`` with ``s`` the rule's support, linear
    terms and dummies ``|b| * sd`` of their raw values. A rule's importance is
    shared among its conditions, each condition crediting its variable.
    """
    mask = _region_mask(data, subregion)
    if mask.sum() < 2:
        raise ValueError("subregion matches fewer than 2 rows")
    region = data.take(np.flatnonzero(mask))
    aligned = model.align(region)
    yscale = None
    if standardize:
        if model.family != GAUSSIAN:
            raise ValueError("standardized importances need the gaussian family")
        yscale = float(np.std(region.y, ddof=1))
        if yscale == 0:
            raise ValueError("response sd is zero in the selected rows")

    active = model.nonzero_terms
    raw = model.term_values(aligned, active, aligned=True) / np.array(
        [t.scale for t in active]) if active else np.zeros((region.n_rows, 0))
    learners = []
    credit = {v: 0.0 for v in model.predictor_names}
    for k, t in enumerate(active):
        coef = t.raw_coefficient
        if isinstance(t.learner, Rule):
            s = float(raw[:, k].mean())
            sd = float(np.sqrt(s * (1 - s)))
        else:
            sd = float(np.std(raw[:, k], ddof=1))
        imp = abs(coef) * sd
        if yscale is not None:
            imp /= yscale
        learners.append({"name": t.name, "description": t.describe(), "coefficient": coef,
                         "sd": sd, "importance": imp})
        share = imp / len(t.variables)
        for v in t.variables:
            credit[v] += share
    learners.sort(key=lambda r: -r["importance"])
    variables = sorted(credit.items(), key=lambda kv: -kv[1])
    if round is not None:
        for r in learners:
            for key in ("coefficient", "sd", "importance"):
                r[key] = float(np.round(r[key], round))
        variables = [(v, float(np.round(i, round))) for v, i in variables]
    return ImportanceReport(learners, variables, standardize, int(region.n_rows), yscale)


# -- partial dependence ----------------------------------------------------------

@dataclass
class PDSurface:
    variables: tuple[str, ...]
    grid: list[tuple]          # display values (numbers or level labels) per point
    values: np.ndarray
    n_rows: int

    def to_rows(self) -> list[dict]:
        out = []
        for point, val in zip(self.grid, self.values):
            row = dict(zip(self.variables, point))
            row["pd"] = float(val)
            out.append(row)
        return out


def _stored_grid(data: Dataset, name: str, grid=None, max_points: int = PD_MAX_POINTS):
    """Grid as stored column values (floats or level codes) plus display values."""
    col = data.column_schema(name)
    if grid is None:
        stored = np.unique(data.codes(name))
        if not col.is_categorical and stored.size > max_points:
            stored = np.quantile(data.codes(name), np.linspace(0, 1, max_points))
    elif col.is_categorical:
        codes = []
        for g in grid:
            if str(g) not in col.levels:
                raise DataError(f"unseen level {g!r} for variable {name!r}")
            codes.append(col.levels.index(str(g)))
        stored = np.array(codes, dtype=np.int64)
    else:
        stored = np.asarray(grid, dtype=np.float64)
        if stored.ndim != 1 or not np.all(np.isfinite(stored)):
            raise DataError(f"grid for {name!r} must be finite numbers")
    shown = [col.levels[int(c)] for c in stored] if col.is_categorical else [float(x) for x in stored]
    return stored, shown


class _Substituter:
    """Link-scale predictions with selected columns overwritten, reusing the rest."""

    def __init__(self, model: EnsembleModel, data: Dataset, variables):
        self.model = model
        self.data = model.align(data)
        active = model.nonzero_terms
        touched = [t for t in active if set(t.variables) & set(variables)]
        fixed = [t for t in active if not set(t.variables) & set(variables)]
        self.base = np.full(self.data.n_rows, model.intercept)
        if fixed:
            self.base = self.base + model.term_values(self.data, fixed, aligned=True) @ np.array(
                [t.coefficient for t in fixed])
        self.touched = touched
        self.coefs = np.array([t.coefficient for t in touched])

    def link(self, assignment: dict) -> np.ndarray:
        if not self.touched:
            return self.base.copy()
        d = self.data
        for name, value in assignment.items():
            d = d.with_column(name, value)
        return self.base + self.model.term_values(d, self.touched, aligned=True) @ self.coefs


def partial_dependence(model: EnsembleModel, data: Dataset, variables, grid=None,
                       max_points: int = PD_MAX_POINTS) -> PDSurface:
    """Average link-scale prediction with ``variables`` set to each grid point.

    ``grid`` is a list of values (one variable) or a pair of lists (two
    variables, combined as a Cartesian product).
    """
    variables = (variables,) if isinstance(variables, str) else tuple(variables)
    if not 1 <= len(variables) <= 2:
        raise ValueError("partial dependence takes one or two variables")
    for v in variables:
        if v not in model.predictor_names:
            raise DataError(f"{v!r} is not a predictor of the model")
    if grid is not None and len(variables) == 1:
        grid = [grid]
    aligned = model.align(data)
    axes = [_stored_grid(aligned, v, None if grid is None else grid[k], max_points)
            for k, v in enumerate(variables)]
    sub = _Substituter(model, data, variables)
    points, shown, values = [], [], []
    if len(variables) == 1:
        for s, d in zip(*axes[0]):
            points.append({variables[0]: s})
            shown.append((d,))
    else:
        for s1, d1 in zip(*axes[0]):
            for s2, d2 in zip(*axes[1]):
                points.append({variables[0]: s1, variables[1]: s2})
                shown.append((d1, d2))
    for p in points:
        values.append(sub.link(p).mean())
    return PDSurface(variables, shown, np.array(values), data.n_rows)


# -- interaction statistics ----------------------------------------------------

def h_statistic(model: EnsembleModel, data: Dataset, variable: str) -> float:
    """Share of prediction variance not captured by ``F_j + F_\\j`` (link scale).

    Both partial dependence functions are evaluated exactly at the data:
    each observed value of ``variable`` is substituted into every row.
    """
    if variable not in model.predictor_names:
        raise DataError(f"{variable!r} is not a predictor of the model")
    sub = _Substituter(model, data, [variable])
    x = sub.data.codes(variable)
    uniq, inv, counts = np.unique(x, return_inverse=True, return_counts=True)
    n = x.shape[0]
    M = np.empty((n, uniq.shape[0]))
    for k, v in enumerate(uniq):
        M[:, k] = sub.link({variable: v})
    F = M[np.arange(n), inv]
    Fj = M.mean(axis=0)[inv]
    Fnot = M @ counts / n
    F = F - F.mean()
    Fj = Fj - Fj.mean()
    Fnot = Fnot - Fnot.mean()
    den = float(F @ F)
    if den <= 1e-300 or np.ptp(F) == 0:
        raise ValueError("variance of predictions is zero")
    num = float(np.sum((F - Fj - Fnot) ** 2))
    return max(0.0, num / den)


def additive_part(model: EnsembleModel, data: Dataset) -> np.ndarray:
    """Intercept plus linear, dummy and single-condition rule contributions (link scale)."""
    terms = [t for t in model.nonzero_terms
             if not isinstance(t.learner, Rule) or t.learner.length == 1]
    out = np.full(data.n_rows, model.intercept)
    if terms:
        out = out + model.term_values(data, terms) @ np.array([t.coefficient for t in terms])
    return out


def bs_null_datasets(model: EnsembleModel, data: Dataset, nsamp: int = 10, seed=0) -> list[Dataset]:
    """Bootstrap datasets whose responses carry no interactions.

    Rows are resampled with replacement. For gaussian models the response is
    the additive part plus permuted training residuals; for other families it
    is drawn from the family's distribution with mean given by the additive part.
    """
    if nsamp < 1:
        raise ValueError("nsamp must be >= 1")
    if data.response is None:
        raise DataError("null datasets need the training response")
    fa = additive_part(model, data)
    resid = data.y - fa
    out = []
    for ss in np.random.SeedSequence(seed).spawn(nsamp):
        rng = np.random.default_rng(ss)
        idx = rng.integers(0, data.n_rows, data.n_rows)
        f = fa[idx]
        if model.family == GAUSSIAN:
            ystar = f + resid[rng.permutation(data.n_rows)]
        elif model.family == BINOMIAL:
            ystar = (rng.random(data.n_rows) < inverse_link(BINOMIAL, f)).astype(np.float64)
        elif model.family == POISSON:
            ystar = rng.poisson(inverse_link(POISSON, f)).astype(np.float64)
        else:
            raise ValueError(f"unsupported family {model.family!r}")
        out.append(data.take(idx).with_response(ystar))
    return out


@dataclass
class HReport:
    variables: list[str]
    observed: np.ndarray
    quantiles: np.ndarray | None = None     # rows: variables; columns: .05, .50, .95
    null_values: np.ndarray | None = None   # rows: variables; columns: null models

    def flags(self) -> list[str]:
        if self.quantiles is None:
            return [""] * len(self.variables)
        return ["exceeds null" if o > q[2] else "not above null"
                for o, q in zip(self.observed, self.quantiles)]

    def to_rows(self) -> list[dict]:
        rows = []
        for k, v in enumerate(self.variables):
            row = {"variable": v, "observed": float(self.observed[k])}
            if self.quantiles is not None:
                row.update(q05=float(self.quantiles[k, 0]), q50=float(self.quantiles[k, 1]),
                           q95=float(self.quantiles[k, 2]), flag=self.flags()[k])
            rows.append(row)
        return rows


def _null_h(model, data, variable) -> float:
    try:
        return h_statistic(model, data, variable)
    except ValueError:
        # constant null predictions carry no interaction
        return 0.0


def interact_test(model: EnsembleModel, data: Dataset, null_models=None, variables=None) -> HReport:
    """Observed H^2 per variable, with null-model quantiles when ``null_models`` is given."""
    variables = list(model.predictor_names if variables is None else variables)
    observed = np.array([h_statistic(model, data, v) for v in variables])
    if null_models is None:
        return HReport(variables, observed)
    if len(null_models) == 0:
        raise ValueError("null-model quantiles need at least one null model")
    null = np.array([[_null_h(m, data, v) for m in null_models] for v in variables])
    q = np.quantile(null, NULL_QUANTILES, axis=1).T
    return HReport(variables, observed, q, null)
