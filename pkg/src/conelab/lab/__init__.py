"""Experiment runner: configs, studies, reports, and the CLI."""

from .config import ExperimentConfig, build_config, d2_instance, load_config, reference_instance
from .report import CriterionResult, StudyReport, emit, summary_line
from .studies import (
    run_concentration,
    run_convergence,
    run_identities,
    run_mmse,
    run_short_time,
    run_variational_grid,
)

__all__ = [
    "ExperimentConfig",
    "build_config",
    "load_config",
    "reference_instance",
    "d2_instance",
    "CriterionResult",
    "StudyReport",
    "emit",
    "summary_line",
    "run_identities",
    "run_convergence",
    "run_concentration",
    "run_mmse",
    "run_short_time",
    "run_variational_grid",
]
