"""Metrics, the benchmark grid, and report writers."""

from .benchmark import (
    FSBM_NAME,
    Balancing,
    BenchmarkCell,
    BenchmarkGrid,
    LlmSettings,
    benchmark_document,
    cells_from_document,
    derive_seed,
    emit_report,
    parse_csv_report,
    report_filename,
    run_benchmark,
    write_reports,
)
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics, confusion_matrix, is_failure

__all__ = [
    "FSBM_NAME",
    "Balancing",
    "BenchmarkCell",
    "BenchmarkGrid",
    "ConfusionMatrix",
    "LlmSettings",
    "MetricsReport",
    "benchmark_document",
    "cells_from_document",
    "compute_metrics",
    "confusion_matrix",
    "derive_seed",
    "emit_report",
    "is_failure",
    "parse_csv_report",
    "report_filename",
    "run_benchmark",
    "write_reports",
]
