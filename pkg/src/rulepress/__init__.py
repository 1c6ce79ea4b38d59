"""Prediction rule ensembles: sparse linear models over tree-derived rules and linear terms."""

from .config import FitSettings, PRESETS, settings_for
from .dataio import DataError, Dataset, from_arrays, load_csv
from .ensemble import EnsembleModel, fit, format_table, load_model, save_model
from .interpret import (bs_null_datasets, h_statistic, importance, interact_test,
                        partial_dependence)
from .validate import auc, cross_validate, gen_friedman1

__version__ = "0.1.0"

__all__ = [
    "DataError", "Dataset", "EnsembleModel", "FitSettings", "PRESETS", "auc",
    "bs_null_datasets", "cross_validate", "fit", "format_table", "from_arrays",
    "gen_friedman1", "h_statistic", "importance", "interact_test", "load_csv",
    "load_model", "partial_dependence", "save_model", "settings_for",
]
