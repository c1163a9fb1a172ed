"""Datasets, the evaluation protocol, statistics and reports."""

from .datasets import (MeasuredDataset, LandscapeSpec, load_dataset, random_landscape, synth_landscape,
                       system_dataset, system_docs, system_pruned_space, system_space)
from .protocol import Cell, EvalReport, ExperimentSpec, run_protocol
from .report import build_report, format_cell
from .stats import cliffs_delta, improvement_pct, markers, wilcoxon_signed_rank

__all__ = [
    "Cell", "EvalReport", "ExperimentSpec", "LandscapeSpec", "MeasuredDataset", "build_report",
    "cliffs_delta", "format_cell", "improvement_pct", "load_dataset", "markers", "random_landscape",
    "run_protocol", "synth_landscape", "system_dataset", "system_docs", "system_pruned_space",
    "system_space", "wilcoxon_signed_rank",
]
