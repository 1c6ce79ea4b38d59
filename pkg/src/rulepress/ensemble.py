"""The fitted rule ensemble: assembly, prediction, persistence and printing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import FitSettings
from .dataio import ColumnSchema, DataError, Dataset, split_folds
from .design import (DesignMatrix, FactorDummy, LinearTerm, build_columns,
                     build_design_matrix, learner_kind)
from .penreg import (CVResult, LambdaPath, cv_path, fit_path, inverse_link, lambda_sequence,
                     measure_label, select_lambda)
from .rulegen import BINOMIAL, check_family, generate_initial_ensemble
from .rules import Rule

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class Term:
    name: str
    learner: object
    coefficient: float       # on the (scaled) design column
    scale: float = 1.0
    sd: float = 0.0          # sd of the unscaled learner on the training data
    support: float | None = None

    @property
    def kind(self) -> str:
        return learner_kind(self.learner)

    @property
    def raw_coefficient(self) -> float:
        """Coefficient on the unscaled learner (rule indicator or winsorized variable)."""
        return self.coefficient * self.scale

    @property
    def variables(self) -> list[str]:
        return self.learner.variables

    def describe(self) -> str:
        return self.learner.describe()


@dataclass
class EnsembleModel:
    family: str
    response: str
    predictors: list[ColumnSchema]
    intercept: float
    terms: list[Term]
    lambda_: float | None = None
    criterion: object = "lambda.1se"
    response_levels: tuple | None = None
    cv: dict | None = None
    alternates: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)

    # -- views -----------------------------------------------------------------

    @property
    def nonzero_terms(self) -> list[Term]:
        return [t for t in self.terms if t.coefficient != 0]

    @property
    def rules(self) -> list[Rule]:
        return [t.learner for t in self.terms if isinstance(t.learner, Rule)]

    @property
    def predictor_names(self) -> list[str]:
        return [c.name for c in self.predictors]

    def with_criterion(self, criterion) -> "EnsembleModel":
        """The same ensemble with coefficients at another stored lambda."""
        key = str(criterion)
        if key == str(self.criterion):
            return self
        if key not in self.alternates:
            raise ValueError(f"no stored solution for criterion {criterion!r}; "
                             f"available: {', '.join([str(self.criterion), *self.alternates])}")
        alt = self.alternates[key]
        terms = [replace(t, coefficient=c) for t, c in zip(self.terms, alt["coefficients"])]
        alternates = dict(self.alternates)
        alternates.pop(key)
        alternates[str(self.criterion)] = {"lambda": self.lambda_, "intercept": self.intercept,
                                           "coefficients": [t.coefficient for t in self.terms]}
        return replace(self, intercept=alt["intercept"], terms=terms, lambda_=alt["lambda"],
                       criterion=criterion, alternates=alternates)

    # -- prediction --------------------------------------------------------------

    def align(self, data: Dataset) -> Dataset:
        """Re-express ``data``'s predictor columns in the training schema."""
        schema, cols = [], {}
        for col in self.predictors:
            try:
                have = data.column_schema(col.name)
            except DataError:
                raise DataError(f"data lacks predictor column {col.name!r}") from None
            if col.is_categorical:
                if not have.is_categorical:
                    raise DataError(f"column {col.name!r} must be categorical")
                index = {l: k for k, l in enumerate(col.levels)}
                mapping = np.empty(len(have.levels), dtype=np.int64)
                used = np.unique(data.codes(col.name))
                for k, level in enumerate(have.levels):
                    if level in index:
                        mapping[k] = index[level]
                    elif k in used:
                        raise DataError(f"unseen level {level!r} in column {col.name!r}")
                    else:
                        mapping[k] = 0
                cols[col.name] = mapping[data.codes(col.name)]
            else:
                if have.is_categorical:
                    raise DataError(f"column {col.name!r} must be continuous")
                cols[col.name] = data.codes(col.name)
            schema.append(col)
        return Dataset(schema, cols, None, data.weights)

    def term_values(self, data: Dataset, terms=None, aligned: bool = False) -> np.ndarray:
        terms = self.terms if terms is None else terms
        if not aligned:
            data = self.align(data)
        return build_columns([t.learner for t in terms], [t.scale for t in terms], data)

    def predict_link(self, data: Dataset, aligned: bool = False) -> np.ndarray:
        active = self.nonzero_terms
        if not active:
            return np.full(data.n_rows, self.intercept)
        X = self.term_values(data, active, aligned)
        return self.intercept + X @ np.array([t.coefficient for t in active])

    def predict(self, data: Dataset, scale: str = "link") -> np.ndarray:
        """Predictions on the ``link``, ``response`` or ``class`` scale.

        ``class`` (binomial only) returns 1 where the probability exceeds 0.5;
        a probability of exactly 0.5 gives the negative class.
        """
        eta = self.predict_link(data)
        if scale == "link":
            return eta
        if scale == "response":
            return inverse_link(self.family, eta)
        if scale == "class":
            if self.family != BINOMIAL:
                raise ValueError("class predictions need the binomial family")
            return (inverse_link(self.family, eta) > 0.5).astype(np.int64)
        raise ValueError(f"unknown prediction scale {scale!r}")

    def class_labels(self, classes) -> list:
        if self.response_levels is None:
            return [int(c) for c in classes]
        return [self.response_levels[int(c)] for c in classes]


# -- fitting -------------------------------------------------------------------

def _term_name(learner, rule_number):
    if isinstance(learner, Rule):
        return f"rule{rule_number}"
    if isinstance(learner, FactorDummy):
        return f"{learner.variable}{learner.level}"
    return learner.variable


def _cv_summary(cv: CVResult, path: LambdaPath, family: str) -> dict:
    return {"measure": cv.measure, "label": measure_label(cv.measure, family),
            "nfolds": cv.nfolds, "lambdas": cv.lambdas.tolist(),
            "mean_loss": cv.mean_loss.tolist(), "se": cv.se.tolist(),
            "nonzero": path.nonzero().tolist(),
            "lambda_min": cv.lambda_min, "lambda_1se": cv.lambda_1se}


def assemble_model(design: DesignMatrix, path: LambdaPath, cv: CVResult | None, criterion,
                   data: Dataset, rule_numbers=None, settings: dict | None = None) -> EnsembleModel:
    """Pick the coefficients at ``criterion`` and wrap them with their learners."""
    rule_numbers = rule_numbers or {}
    terms = []
    for k, col in enumerate(design.columns):
        terms.append(Term(_term_name(col.learner, rule_numbers.get(id(col.learner), k + 1)),
                          col.learner, 0.0, col.scale, col.sd, col.support))

    def solution(crit):
        if cv is not None:
            lam = select_lambda(cv, crit)
        else:
            lam = float(crit) if not isinstance(crit, str) else float(path.lambdas[-1])
        k = path.index_of(lam)
        return lam, float(path.intercepts[k]), [float(c) for c in path.coefs[k]]

    lam, intercept, coefs = solution(criterion)
    for t, c in zip(terms, coefs):
        t.coefficient = c
    alternates = {}
    if cv is not None:
        for crit in ("lambda.min", "lambda.1se"):
            if crit != criterion:
                alam, aint, acoefs = solution(crit)
                alternates[crit] = {"lambda": alam, "intercept": aint, "coefficients": acoefs}
    resp_col = data.column_schema(data.response)
    return EnsembleModel(
        family=path.family, response=data.response,
        predictors=[data.column_schema(n) for n in data.predictors],
        intercept=intercept, terms=terms, lambda_=lam, criterion=criterion,
        response_levels=resp_col.levels if resp_col.is_categorical else None,
        cv=_cv_summary(cv, path, path.family) if cv is not None else None,
        alternates=alternates, settings=settings or {}, dropped=list(design.dropped))


def _intercept_only(data, settings: FitSettings, design: DesignMatrix) -> EnsembleModel:
    y, w = data.y, data.weights
    mu = float(w @ y / w.sum())
    eta = inverse_link_inv(settings.family, mu)
    resp_col = data.column_schema(data.response)
    return EnsembleModel(settings.family, data.response,
                         [data.column_schema(n) for n in data.predictors], eta, [],
                         None, settings.criterion,
                         resp_col.levels if resp_col.is_categorical else None,
                         settings=settings.to_dict(), dropped=list(design.dropped))


def inverse_link_inv(family, mu):
    if family == BINOMIAL:
        return math.log(mu / (1 - mu))
    if family == "poisson":
        return math.log(mu)
    return mu


def fit(data: Dataset, settings: FitSettings = FitSettings(), threads: int = 1,
        return_parts: bool = False):
    """Run the whole pipeline: rules, design matrix, cross-validated lasso path."""
    if data.response is None:
        raise DataError("training data needs a response column")
    y = data.y
    check_family(settings.family, y)
    w = data.weights
    tree_seed, fold_seed = np.random.SeedSequence(settings.seed).spawn(2)

    rules, R = [], None
    if settings.type != "linear":
        rules, R = generate_initial_ensemble(data, settings.generation(), tree_seed, threads,
                                             return_matrix=True)
    design = build_design_matrix(data, rules, settings.type, settings.winsfrac,
                                 settings.normalize, settings.standardize, rule_values=R)
    rule_numbers = {id(r): k + 1 for k, r in enumerate(rules)}
    if design.n_columns == 0:
        model = _intercept_only(data, settings, design)
        return (model, design, None, None) if return_parts else model

    if settings.lambdas is not None:
        lambdas = np.array(settings.lambdas)
    else:
        lambdas = lambda_sequence(design.X, y, w, settings.family, settings.alpha_mix,
                                  settings.nlambda)
    path = fit_path(design.X, y, w, settings.family, settings.alpha_mix, lambdas)
    folds = split_folds(data.n_rows, settings.nfolds, stratify=settings.family == BINOMIAL,
                        rng=np.random.default_rng(fold_seed), y=y)
    cv = cv_path(design.X, y, w, settings.family, settings.alpha_mix, folds,
                 settings.measure, lambdas, threads=threads)
    model = assemble_model(design, path, cv, settings.criterion, data, rule_numbers,
                           settings.to_dict())
    return (model, design, path, cv) if return_parts else model


# -- persistence ---------------------------------------------------------------

def _learner_to_dict(learner) -> dict:
    d = learner.to_dict()
    d["kind"] = learner_kind(learner)
    return d


def _learner_from_dict(d: dict):
    kind = d["kind"]
    if kind == "rule":
        return Rule.from_dict(d)
    if kind == "linear":
        return LinearTerm.from_dict(d)
    if kind == "dummy":
        return FactorDummy(d["variable"], d["level"])
    raise ModelFormatError(f"unknown learner kind {kind!r}")


def model_to_dict(model: EnsembleModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "response": model.response,
        "response_levels": list(model.response_levels) if model.response_levels else None,
        "predictors": [c.to_dict() for c in model.predictors],
        "intercept": model.intercept,
        "lambda": model.lambda_,
        "criterion": model.criterion,
        "seed": model.settings.get("seed"),
        "terms": [{"name": t.name, "kind": t.kind, "descriptor": _learner_to_dict(t.learner),
                   "coefficient": t.coefficient, "sd": t.sd,
                   "support": t.support} for t in model.terms],
        "normalize_scales": [t.scale for t in model.terms],
        "cv": model.cv,
        "alternates": model.alternates,
        "settings": model.settings,
        "dropped": [list(d) for d in model.dropped],
    }


def model_from_dict(d: dict) -> EnsembleModel:
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version!r} "
                               f"(expected {FORMAT_VERSION})")
    try:
        scales = d["normalize_scales"]
        if len(scales) != len(d["terms"]):
            raise ModelFormatError("malformed model file: normalize_scales length mismatch")
        terms = [Term(t["name"], _learner_from_dict(t["descriptor"]), t["coefficient"],
                      s, t["sd"], t["support"]) for t, s in zip(d["terms"], scales)]
        levels = d.get("response_levels")
        return EnsembleModel(
            family=d["family"], response=d["response"],
            predictors=[ColumnSchema.from_dict(c) for c in d["predictors"]],
            intercept=d["intercept"], terms=terms, lambda_=d["lambda"],
            criterion=d["criterion"], response_levels=tuple(levels) if levels else None,
            cv=d.get("cv"), alternates=d.get("alternates", {}), settings=d.get("settings", {}),
            dropped=[tuple(x) for x in d.get("dropped", [])])
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None


def dumps_model(model: EnsembleModel) -> str:
    # float repr is the shortest decimal string that round-trips exactly
    return json.dumps(model_to_dict(model), indent=1, ensure_ascii=True, allow_nan=False) + "\n"


def save_model(model: EnsembleModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="ascii")


def load_model(path) -> EnsembleModel:
    raw = Path(path).read_bytes()
    try:
        d = json.loads(raw.decode("ascii"))
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"model file is not ASCII JSON (byte offset {exc.start})") from None
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model file: {exc.msg} at byte offset {exc.pos}") from None
    if not isinstance(d, dict):
        raise ModelFormatError("malformed model file: top level is not an object")
    return model_from_dict(d)


# -- printing ------------------------------------------------------------------

def _header(model: EnsembleModel) -> list[str]:
    crit = model.criterion
    if crit == "lambda.1se":
        title = "Final ensemble with cv error within 1se of minimum:"
    elif crit == "lambda.min":
        title = "Final ensemble with minimum cv error:"
    else:
        title = f"Final ensemble with lambda = {crit}:"
    lines = [title]
    if model.lambda_ is not None:
        lines.append(f"  lambda =  {model.lambda_:.5g}")
    lines.append(f"  number of terms = {len(model.nonzero_terms)}")
    if model.cv is not None and model.lambda_ is not None:
        k = int(np.argmin(np.abs(np.array(model.cv["lambdas"]) - model.lambda_)))
        lines.append(f"  mean cv error (se) = {model.cv['mean_loss'][k]:.7g} "
                     f"({model.cv['se'][k]:.7g})")
        lines += ["", f"  cv error type : {model.cv['label']}"]
    return lines


def format_table(model: EnsembleModel, criterion=None, hide_zero: bool = True) -> str:
    """Text rendering of the ensemble, terms sorted by absolute coefficient."""
    if criterion is not None:
        model = model.with_criterion(criterion)
    terms = model.terms if not hide_zero else model.nonzero_terms
    terms = sorted(terms, key=lambda t: -abs(t.raw_coefficient))
    rows = [("(Intercept)", f"{model.intercept:.8f}", "1")]
    rows += [(t.name, f"{t.raw_coefficient:.8f}", t.describe()) for t in terms]
    w0 = max(len("rule"), *(len(r[0]) for r in rows))
    w1 = max(len("coefficient"), *(len(r[1]) for r in rows))
    lines = _header(model) + [""]
    lines.append(f"  {'rule':>{w0}}  {'coefficient':>{w1}}  description")
    lines += [f"  {a:>{w0}}  {b:>{w1}}  {c}" for a, b, c in rows]
    return "\n".join(lines) + "\n"


def coef_table(model: EnsembleModel) -> list[dict]:
    """Every term with its (raw-scale) coefficient, zero or not."""
    out = [{"name": "(Intercept)", "coefficient": model.intercept, "description": "1"}]
    out += [{"name": t.name, "coefficient": t.raw_coefficient, "description": t.describe()}
            for t in sorted(model.terms, key=lambda t: -abs(t.raw_coefficient))]
    return out
