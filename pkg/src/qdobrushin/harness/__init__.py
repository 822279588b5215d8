"""Experiment runner: configs, pipelines, acceptance checks and reports."""
from .config import CONFIG_SCHEMA_ID, KINDS, ConfigError, ExperimentConfig, load, validate
from .experiments import run
from .report import REPORT_SCHEMA_ID, ExperimentReport, Table

__all__ = ["CONFIG_SCHEMA_ID", "KINDS", "ConfigError", "ExperimentConfig", "load", "validate", "run",
           "REPORT_SCHEMA_ID", "ExperimentReport", "Table"]
