"""Experiment harness: runs, SVG plots and comparison tables."""

from .compare import CompareTable, FingerprintMismatch, compare_report, iterations_to
from .experiment import (EXIT_BAD_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_SOLVER_FAILURE,
                         ExperimentConfig, ExperimentResult, fingerprint, run_experiment)
from .plot import plot_traces, render_svg

__all__ = [
    "CompareTable",
    "EXIT_BAD_INPUT",
    "EXIT_NOT_CONVERGED",
    "EXIT_OK",
    "EXIT_SOLVER_FAILURE",
    "ExperimentConfig",
    "ExperimentResult",
    "FingerprintMismatch",
    "compare_report",
    "fingerprint",
    "iterations_to",
    "plot_traces",
    "render_svg",
    "run_experiment",
]
