"""Probabilistic-circuit generators for tabular data."""

from ._tabpc import (
    Model,
    Table,
    TabpcError,
    c2st,
    fit,
    load_csv,
    load_model,
    run_cli,
    shape,
    trend,
    wnmis,
)

__all__ = [
    "Model",
    "Table",
    "TabpcError",
    "c2st",
    "fit",
    "load_csv",
    "load_model",
    "run_cli",
    "shape",
    "trend",
    "wnmis",
]
