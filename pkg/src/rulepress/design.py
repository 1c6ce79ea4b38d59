"""Base-learner design matrix: rule indicators, winsorized linear terms, factor dummies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .dataio import DataError, Dataset
from .rules import Rule, format_number
from .rulegen import rule_matrix

RULES, LINEAR, BOTH = "rules", "linear", "both"

# sd of a rule whose support is uniform on [0, 1]: sqrt(integral of s(1-s)) = sqrt(1/6)
TYPICAL_RULE_SD = 0.4


@dataclass(frozen=True)
class LinearTerm:
    variable: str
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("winsorizing bounds must satisfy lower <= upper")

    def values(self, data: Dataset) -> np.ndarray:
        return np.clip(data.numeric(self.variable), self.lower, self.upper)

    @property
    def variables(self) -> list[str]:
        return [self.variable]

    def describe(self) -> str:
        if math.isinf(self.lower) and math.isinf(self.upper):
            return self.variable
        return f"{format_number(self.lower)} <= {self.variable} <= {format_number(self.upper)}"

    def to_dict(self) -> dict:
        # infinite (absent) bounds are stored as null
        return {"variable": self.variable,
                "lower": None if math.isinf(self.lower) else self.lower,
                "upper": None if math.isinf(self.upper) else self.upper}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearTerm":
        lo, hi = d.get("lower"), d.get("upper")
        return cls(d["variable"], -math.inf if lo is None else lo, math.inf if hi is None else hi)


@dataclass(frozen=True)
class FactorDummy:
    variable: str
    level: str

    def values(self, data: Dataset) -> np.ndarray:
        col = data.column_schema(self.variable)
        if self.level not in col.levels:
            return np.zeros(data.n_rows)
        return (data.codes(self.variable) == col.levels.index(self.level)).astype(np.float64)

    @property
    def variables(self) -> list[str]:
        return [self.variable]

    def describe(self) -> str:
        return f"{self.variable} == {self.level}"

    def to_dict(self) -> dict:
        return {"variable": self.variable, "level": self.level}


Learner = Union[Rule, LinearTerm, FactorDummy]


def learner_kind(learner) -> str:
    if isinstance(learner, Rule):
        return "rule"
    if isinstance(learner, LinearTerm):
        return "linear"
    if isinstance(learner, FactorDummy):
        return "dummy"
    raise TypeError(f"not a base learner: {learner!r}")


def learner_values(learner, data: Dataset) -> np.ndarray:
    """Unscaled values of one base learner on every row."""
    if isinstance(learner, Rule):
        return learner.evaluate(data)
    return learner.values(data)


def winsorize(values, beta: float):
    """Clamp ``values`` to their (beta, 1 - beta) quantiles (linear interpolation).

    Returns ``(lower, upper, clamped)``; with ``beta == 0`` the bounds are
    infinite so that new data is never clamped either.
    """
    if not 0 <= beta < 0.5:
        raise ValueError("winsorizing fraction must lie in [0, 0.5)")
    x = np.asarray(values, dtype=np.float64)
    if beta == 0:
        return -math.inf, math.inf, x.copy()
    lower, upper = np.quantile(x, [beta, 1.0 - beta])
    return float(lower), float(upper), np.clip(x, lower, upper)


@dataclass
class DesignColumn:
    learner: Learner
    scale: float = 1.0
    sd: float = 0.0
    support: float | None = None

    @property
    def kind(self) -> str:
        return learner_kind(self.learner)


@dataclass
class DesignMatrix:
    X: np.ndarray
    columns: list[DesignColumn]
    dropped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def transform(self, data: Dataset) -> np.ndarray:
        """Design matrix for new rows with the training learners and scales."""
        return build_columns([c.learner for c in self.columns], [c.scale for c in self.columns], data)


def build_columns(learners, scales, data: Dataset) -> np.ndarray:
    X = np.empty((data.n_rows, len(learners)), order="F")
    rules = [(k, l) for k, l in enumerate(learners) if isinstance(l, Rule)]
    if rules:
        R = rule_matrix([l for _, l in rules], data)
        for (k, _), col in zip(rules, R.T):
            X[:, k] = col
    for k, l in enumerate(learners):
        if not isinstance(l, Rule):
            X[:, k] = l.values(data)
    X *= np.asarray(scales, dtype=np.float64)
    return X


def build_design_matrix(data: Dataset, rules=(), type: str = BOTH, winsfrac: float = 0.025,
                        normalize: bool = True, standardize: bool = False,
                        rule_values=None) -> DesignMatrix:
    """Assemble the initial ensemble's columns.

    Rules first (unless ``type == "linear"``), then, unless ``type == "rules"``,
    one winsorized linear term per continuous or ordered predictor and
    ``q - 1`` dummies per unordered factor. With ``normalize`` each linear term
    is rescaled to sd 0.4; with ``standardize`` every column gets unit sd.
    Zero-variance columns are dropped and listed in ``dropped``.
    """
    if type not in (RULES, LINEAR, BOTH):
        raise ValueError(f"unknown ensemble type {type!r}")
    n = data.n_rows
    if n < 2:
        raise DataError("at least 2 rows are needed to build the design matrix")

    learners, values = [], []
    if type != LINEAR:
        rules = list(rules)
        R = rule_matrix(rules, data) if rule_values is None else np.asarray(rule_values)
        for k, r in enumerate(rules):
            learners.append(r)
            values.append(R[:, k])
    if type != RULES:
        for name in data.predictors:
            col = data.column_schema(name)
            if col.kind == "unordered":
                codes = data.codes(name)
                for lvl_idx, level in enumerate(col.levels[1:], start=1):
                    learners.append(FactorDummy(name, level))
                    values.append((codes == lvl_idx).astype(np.float64))
            else:
                lo, hi, v = winsorize(data.numeric(name), winsfrac)
                learners.append(LinearTerm(name, lo, hi))
                values.append(v)

    columns, kept, dropped = [], [], []
    for learner, v in zip(learners, values):
        sd = float(np.std(v, ddof=1))
        if not sd > 0:
            dropped.append((describe_learner(learner), "zero variance"))
            continue
        scale = 1.0
        if standardize:
            scale = 1.0 / sd
        elif normalize and isinstance(learner, LinearTerm):
            scale = TYPICAL_RULE_SD / sd
        support = float(v.mean()) if isinstance(learner, Rule) else None
        columns.append(DesignColumn(learner, scale, sd, support))
        kept.append(v * scale)
    X = np.asfortranarray(np.column_stack(kept)) if kept else np.empty((n, 0), order="F")
    return DesignMatrix(X, columns, dropped)


def describe_learner(learner) -> str:
    return learner.describe()


def typical_rule_sd() -> float:
    """Exact value of the typical-rule sd, sqrt(1/6), that 0.4 rounds."""
    return math.sqrt(1.0 / 6.0)
