"""Benchmark experiments, metrics and the ``rodsim`` command line."""
from .metrics import ErrorReport, error_metrics, loglog_slope, r3so3_baseline_strains

__all__ = ["ErrorReport", "error_metrics", "loglog_slope", "r3so3_baseline_strains"]
