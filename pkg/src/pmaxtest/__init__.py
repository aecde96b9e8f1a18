"""Parsimonious max-tests of many zero restrictions in high-dimensional linear regression."""

__version__ = "0.1.0"

from .bootstrap import (  # noqa: E402
    BootMode,
    BootstrapSpec,
    TestOutcome,
    bootstrap_pvalue,
    bootstrap_pvalue_multiplier,
    max_test,
)
from .dataset import ColumnSchema, Dataset, load_csv, save_csv, validate  # noqa: E402
from .estimators import ParsimoniousMaxTest, WaldBootstrapTest  # noqa: E402
from .maxtest import MaxStat, WeightMode, max_statistic  # noqa: E402
from .pols import build_gram, fit_all, fit_restricted  # noqa: E402
from .wald import WaldOutcome, wald_test  # noqa: E402

__all__ = [
    "BootMode",
    "BootstrapSpec",
    "ColumnSchema",
    "Dataset",
    "MaxStat",
    "ParsimoniousMaxTest",
    "TestOutcome",
    "WaldBootstrapTest",
    "WaldOutcome",
    "WeightMode",
    "bootstrap_pvalue",
    "bootstrap_pvalue_multiplier",
    "build_gram",
    "fit_all",
    "fit_restricted",
    "load_csv",
    "max_statistic",
    "max_test",
    "save_csv",
    "validate",
    "wald_test",
]
