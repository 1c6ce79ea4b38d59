"""Fit settings and named presets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .design import BOTH, LINEAR, RULES
from .penreg import MEASURES
from .rulegen import FAMILIES, GenerationConfig
from .trees import CART, UNBIASED, TreeConfig

PRESETS = ("default", "bagging", "randomforest", "rulefit", "singletree")


@dataclass(frozen=True)
class FitSettings:
    family: str = "gaussian"
    type: str = BOTH
    sampfrac: object = 0.5            # float in (0, 1] or "all"
    maxdepth: object = 3              # int, math.inf, "sampler" or a tuple of length ntrees
    learnrate: float = 0.01
    mtry: float = math.inf
    ntrees: int = 500
    tree_mode: str = UNBIASED
    alpha: float = 0.05
    minsplit: int = 20
    minbucket: int = 7
    removeduplicates: bool = True
    removecomplements: bool = True
    winsfrac: float = 0.025
    normalize: bool = True
    standardize: bool = False
    ordinal: bool = True
    nfolds: int = 10
    alpha_mix: float = 1.0
    criterion: object = "lambda.1se"  # "lambda.1se", "lambda.min" or a lambda value
    measure: str = "deviance"
    nlambda: int = 100
    lambdas: tuple | None = None
    seed: int = 42

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unsupported family {self.family!r}")
        if self.type not in (RULES, LINEAR, BOTH):
            raise ValueError(f"type must be one of rules, linear, both (got {self.type!r})")
        if isinstance(self.sampfrac, str):
            if self.sampfrac != "all":
                raise ValueError("sampfrac must be a number in (0, 1] or 'all'")
        elif not 0 < self.sampfrac <= 1:
            raise ValueError("sampfrac must lie in (0, 1]")
        if self.learnrate < 0:
            raise ValueError("learnrate must be >= 0")
        if self.ntrees < 1:
            raise ValueError("ntrees must be >= 1")
        if not 0 <= self.winsfrac < 0.5:
            raise ValueError("winsfrac must lie in [0, 0.5)")
        if self.nfolds < 2:
            raise ValueError("nfolds must be >= 2")
        if not 0 <= self.alpha_mix <= 1:
            raise ValueError("alpha_mix must lie in [0, 1]")
        if self.measure not in MEASURES:
            raise ValueError(f"measure must be one of {', '.join(MEASURES)}")
        if self.lambdas is not None:
            lams = tuple(sorted((float(l) for l in self.lambdas), reverse=True))
            if len(lams) < 2:
                raise ValueError("a user lambda grid needs at least two values")
            object.__setattr__(self, "lambdas", lams)
        if isinstance(self.maxdepth, list):
            object.__setattr__(self, "maxdepth", tuple(self.maxdepth))
        if isinstance(self.maxdepth, str) and self.maxdepth != "sampler":
            raise ValueError("maxdepth must be a number, 'sampler' or one depth per tree")
        self.generation()

    def tree_config(self) -> TreeConfig:
        depth = self.maxdepth if isinstance(self.maxdepth, (int, float)) else 3
        return TreeConfig(maxdepth=depth, mtry=self.mtry, mode=self.tree_mode, alpha=self.alpha,
                          minsplit=self.minsplit, minbucket=self.minbucket,
                          ordinal_as_continuous=self.ordinal)

    def generation(self) -> GenerationConfig:
        return GenerationConfig(family=self.family, ntrees=self.ntrees, sampfrac=self.sampfrac,
                                maxdepth=self.maxdepth, learnrate=self.learnrate,
                                tree=self.tree_config(),
                                removeduplicates=self.removeduplicates,
                                removecomplements=self.removecomplements)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[k] = "Inf"
            elif isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitSettings":
        known = {f.name for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in known:
                raise ValueError(f"unknown setting {k!r}")
            kw[k] = math.inf if v == "Inf" else v
        return cls(**kw)

    def with_overrides(self, **kw) -> "FitSettings":
        return replace(self, **kw)


def preset(name: str, n_rows: int, n_predictors: int) -> dict:
    """Setting overrides that mimic well-known tree-ensemble approaches."""
    if name == "default":
        return {}
    if name == "bagging":
        return {"sampfrac": 1.0, "maxdepth": math.inf, "learnrate": 0.0, "alpha": 1.0}
    if name == "randomforest":
        return {"sampfrac": 1.0, "maxdepth": math.inf, "learnrate": 0.0, "alpha": 1.0,
                "mtry": math.ceil(math.sqrt(n_predictors))}
    if name == "rulefit":
        neff = n_rows
        nfolds = round(min(20, max(0, 5200 / neff - 2)))
        return {"tree_mode": CART, "maxdepth": "sampler",
                "sampfrac": min(1.0, (11 * math.sqrt(neff) + 1) / neff),
                "nfolds": max(3, nfolds), "criterion": "lambda.min"}
    if name == "singletree":
        return {"ntrees": 1, "type": RULES, "sampfrac": "all"}
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def settings_for(name: str, n_rows: int, n_predictors: int, **overrides) -> FitSettings:
    kw = preset(name, n_rows, n_predictors)
    kw.update(overrides)
    return FitSettings(**kw)
