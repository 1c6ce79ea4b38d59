"""Command-line interface: ``rulepress <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path


from .config import PRESETS, FitSettings, settings_for
from .dataio import ColumnSchema, DataError, UNORDERED, load_csv, load_schema
from .ensemble import ModelFormatError, fit, format_table, load_model, save_model
from .interpret import bs_null_datasets, importance, interact_test, partial_dependence
from .penreg import ConvergenceError, MEASURES
from .validate import cross_validate, gen_friedman1

THREADS_ENV = "RULEPRESS_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


# -- flag value parsers -------------------------------------------------------

def _sampfrac(text):
    return "all" if text == "all" else float(text)


def _maxdepth(text):
    if text == "sampler":
        return text
    if text.lower() in ("inf", "infinite"):
        return math.inf
    return int(text)


def _mtry(text):
    return math.inf if text.lower() in ("inf", "all") else int(text)


def _criterion(text):
    if text in ("lambda.min", "lambda.1se"):
        return text
    return float(text)


def _lambdas(text):
    return tuple(float(v) for v in text.split(","))


# (flag, FitSettings field, argparse kwargs)
_FIT_FLAGS = [
    ("--family", "family", dict(choices=("gaussian", "binomial", "poisson"))),
    ("--type", "type", dict(choices=("rules", "linear", "both"))),
    ("--sampfrac", "sampfrac", dict(type=_sampfrac, help="fraction in (0, 1] or 'all'")),
    ("--maxdepth", "maxdepth", dict(type=_maxdepth, help="integer, 'inf' or 'sampler'")),
    ("--learnrate", "learnrate", dict(type=float)),
    ("--mtry", "mtry", dict(type=_mtry, help="integer or 'inf'")),
    ("--ntrees", "ntrees", dict(type=int)),
    ("--tree-mode", "tree_mode", dict(choices=("unbiased", "cart"))),
    ("--alpha", "alpha", dict(type=float, help="split-test significance level")),
    ("--minsplit", "minsplit", dict(type=int)),
    ("--minbucket", "minbucket", dict(type=int)),
    ("--removeduplicates", "removeduplicates", dict(action=argparse.BooleanOptionalAction)),
    ("--removecomplements", "removecomplements", dict(action=argparse.BooleanOptionalAction)),
    ("--winsfrac", "winsfrac", dict(type=float)),
    ("--normalize", "normalize", dict(action=argparse.BooleanOptionalAction)),
    ("--standardize", "standardize", dict(action=argparse.BooleanOptionalAction)),
    ("--ordinal", "ordinal", dict(action=argparse.BooleanOptionalAction)),
    ("--nfolds", "nfolds", dict(type=int)),
    ("--alpha-mix", "alpha_mix", dict(type=float, help="elastic-net mixing (1 = lasso)")),
    ("--criterion", "criterion", dict(type=_criterion,
                                      help="lambda.1se, lambda.min or a lambda value")),
    ("--measure", "measure", dict(choices=MEASURES)),
    ("--nlambda", "nlambda", dict(type=int)),
    ("--lambdas", "lambdas", dict(type=_lambdas, help="comma-separated lambda grid")),
]


def _add_data_flags(p, response=True):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    if response:
        p.add_argument("--response", required=True, help="response column name")
        p.add_argument("--weights", help="column holding case weights")
    p.add_argument("--schema", help="JSON list of column schemas")


def _add_fit_flags(p):
    p.add_argument("--preset", choices=PRESETS, default="default")
    for flag, dest, kw in _FIT_FLAGS:
        p.add_argument(flag, dest=dest, default=None, **kw)
    p.add_argument("--seed", type=int, default=None)


def _add_threads(p):
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rulepress", description="Prediction rule ensembles.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit an ensemble and write the model file")
    _add_data_flags(p)
    _add_fit_flags(p)
    _add_threads(p)
    p.add_argument("--out", default="model.json")
    p.add_argument("--table", help="printed-table path (default: model path with .txt)")

    p = sub.add_parser("print", help="show a fitted ensemble")
    p.add_argument("--model", required=True)
    p.add_argument("--criterion", type=_criterion)
    p.add_argument("--all", action="store_true", help="include zero-coefficient terms")

    p = sub.add_parser("predict", help="predict new rows")
    p.add_argument("--model", required=True)
    _add_data_flags(p, response=False)
    p.add_argument("--scale", choices=("link", "response", "class"), default="link")
    p.add_argument("--out", default="predictions.csv")

    p = sub.add_parser("importance", help="learner and variable importances")
    p.add_argument("--model", required=True)
    _add_data_flags(p, response=False)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--subregion", help="row filter such as 'x1 > 0.5 & g == a'")
    p.add_argument("--round", type=int)
    p.add_argument("--out", default="importance.csv", help=".csv or .json")

    p = sub.add_parser("pd", help="partial dependence grid")
    p.add_argument("--model", required=True)
    _add_data_flags(p, response=False)
    p.add_argument("--vars", required=True, help="one or two comma-separated variables")
    p.add_argument("--grid-size", type=int, default=40)
    p.add_argument("--out", default="pd.csv")

    p = sub.add_parser("interact", help="interaction statistics against null models")
    p.add_argument("--model", required=True)
    _add_data_flags(p, response=False)
    p.add_argument("--vars", help="comma-separated variables (default: all predictors)")
    p.add_argument("--nsamp", type=int, default=10)
    p.add_argument("--seed", type=int)
    _add_threads(p)
    p.add_argument("--out", default="interact.csv")

    p = sub.add_parser("cv", help="k-fold cross-validation of the whole pipeline")
    _add_data_flags(p)
    _add_fit_flags(p)
    _add_threads(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", default="cv.json")
    p.add_argument("--preds", default="cv_predictions.csv")

    p = sub.add_parser("friedman", help="write a synthetic Friedman #1 dataset")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="friedman1.csv")
    return parser


# -- helpers --------------------------------------------------------------------

def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer (got {env!r})") from None
    if n < 1:
        raise ValueError("threads must be >= 1")
    return n


def _training_data(args):
    hint = load_schema(args.schema) if args.schema else None
    return load_csv(args.data, response=args.response, schema_hint=hint, weights=args.weights)


def _model_data(args, model, with_response=False):
    hint = list(load_schema(args.schema)) if args.schema else []
    named = {c.name for c in hint}
    hint += [c for c in model.predictors if c.name not in named]
    if with_response and model.response_levels:
        hint.append(ColumnSchema(model.response, UNORDERED, model.response_levels))
    return load_csv(args.data, response=model.response if with_response else None,
                    schema_hint=hint)


def fit_settings(args, n_rows, n_predictors) -> FitSettings:
    overrides = {dest: getattr(args, dest) for _, dest, _ in _FIT_FLAGS
                 if getattr(args, dest) is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return settings_for(args.preset, n_rows, n_predictors, **overrides)


def _write_rows(path, rows, columns=None):
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _echo(kind, path):
    print(f"{kind}: {path}")


# -- subcommands ----------------------------------------------------------------

def cmd_fit(args):
    data = _training_data(args)
    settings = fit_settings(args, data.n_rows, len(data.predictors))
    model = fit(data, settings, threads=_threads(args))
    out = Path(args.out)
    save_model(model, out)
    table = format_table(model)
    table_path = Path(args.table) if args.table else out.with_suffix(".txt")
    table_path.write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    _echo("model", out)
    _echo("table", table_path)


def cmd_print(args):
    model = load_model(args.model)
    sys.stdout.write(format_table(model, args.criterion, hide_zero=not args.all))


def cmd_predict(args):
    model = load_model(args.model)
    data = _model_data(args, model)
    if args.scale == "class":
        prob = model.predict(data, "response")
        labels = model.class_labels((prob > 0.5).astype(int))
        rows = [{"row_id": i + 1, "prediction": float(p), "class": c}
                for i, (p, c) in enumerate(zip(prob, labels))]
    else:
        pred = model.predict(data, args.scale)
        rows = [{"row_id": i + 1, "prediction": float(p)} for i, p in enumerate(pred)]
    _write_rows(args.out, rows, ["row_id", "prediction"] + (["class"] if args.scale == "class" else []))
    _echo("predictions", args.out)


def cmd_importance(args):
    model = load_model(args.model)
    data = _model_data(args, model, with_response=args.standardize)
    report = importance(model, data, args.standardize, args.subregion, args.round)
    if args.out.endswith(".json"):
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    else:
        _write_rows(args.out, report.to_rows(),
                    ["level", "name", "description", "coefficient", "sd", "importance"])
    _echo("importance", args.out)


def cmd_pd(args):
    model = load_model(args.model)
    data = _model_data(args, model)
    variables = [v.strip() for v in args.vars.split(",") if v.strip()]
    surface = partial_dependence(model, data, variables, max_points=args.grid_size)
    _write_rows(args.out, surface.to_rows(), list(surface.variables) + ["pd"])
    _echo("pd", args.out)


def cmd_interact(args):
    model = load_model(args.model)
    data = _model_data(args, model, with_response=True)
    variables = ([v.strip() for v in args.vars.split(",")] if args.vars
                 else model.predictor_names)
    settings = FitSettings.from_dict(model.settings)
    seed = args.seed if args.seed is not None else settings.seed
    threads = _threads(args)
    nulls = [fit(d, settings, threads=threads)
             for d in bs_null_datasets(model, data, args.nsamp, seed)]
    report = interact_test(model, data, nulls, variables)
    _write_rows(args.out, report.to_rows(),
                ["variable", "observed", "q05", "q50", "q95", "flag"])
    _echo("interact", args.out)


def cmd_cv(args):
    data = _training_data(args)
    settings = fit_settings(args, data.n_rows, len(data.predictors))
    report = cross_validate(settings, data, args.folds, settings.seed, threads=_threads(args))
    Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    report.write_predictions(args.preds)
    print(report.summary())
    _echo("cv", args.out)
    _echo("predictions", args.preds)


def cmd_friedman(args):
    gen_friedman1(args.n, args.p, args.noise, args.seed).to_csv(args.out)
    _echo("data", args.out)


COMMANDS = {"fit": cmd_fit, "print": cmd_print, "predict": cmd_predict,
            "importance": cmd_importance, "pd": cmd_pd, "interact": cmd_interact,
            "cv": cmd_cv, "friedman": cmd_friedman}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (DataError, ModelFormatError, ConvergenceError, ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"rulepress {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
