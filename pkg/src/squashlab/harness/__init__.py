"""Datasets, experiment runs, overhead timing and reports."""
from .data import DataError, load_mnist, make_blobs, read_idx, stratified_split, write_idx
from .experiment import (
    DatasetKind,
    ExperimentConfig,
    ExperimentError,
    RunLedger,
    load_experiment,
    run_experiment,
)
from .overhead import OverheadRow, measure_overhead
from .report import CSV_COLUMNS, ReportError, report

__all__ = [
    "CSV_COLUMNS",
    "DataError",
    "DatasetKind",
    "ExperimentConfig",
    "ExperimentError",
    "OverheadRow",
    "ReportError",
    "RunLedger",
    "load_experiment",
    "load_mnist",
    "make_blobs",
    "measure_overhead",
    "read_idx",
    "report",
    "run_experiment",
    "stratified_split",
    "write_idx",
]
