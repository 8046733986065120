"""Experiment orchestration, persistence and command-line entry point."""

from pamlab.harness.experiments import (
    DEFAULT_SUITE, EXPERIMENTS, ExperimentSpec, geometric_ks, run_experiment, verify_all,
)
from pamlab.harness.report import Check, ExperimentReport, SuiteReport, export, load_report

__all__ = ["DEFAULT_SUITE", "EXPERIMENTS", "ExperimentSpec", "geometric_ks", "run_experiment", "verify_all",
           "Check", "ExperimentReport", "SuiteReport", "export", "load_report"]
