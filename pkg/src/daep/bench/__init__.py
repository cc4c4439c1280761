"""Experiment configuration, the run executive, metrics and reporting."""

from .config import MODES, VARIANTS, CostModel, RunConfig, Variant
from .metrics import METRICS, Aggregate, RunMetrics, aggregate, aggregate_groups
from .report import load_run, load_runs, read_summary_csv, report
from .runner import Executive, run_experiment

__all__ = [
    "MODES", "VARIANTS", "CostModel", "RunConfig", "Variant", "METRICS", "Aggregate", "RunMetrics", "aggregate",
    "aggregate_groups", "load_run", "load_runs", "read_summary_csv", "report", "Executive", "run_experiment",
]
