"""Configuration, orchestration, metrics and the command line."""

from .config import BackendSpec, ExperimentConfig, load_config, parse_config
from .metrics import RunSummary, SeedMetrics, aggregate, area_under_curve, first_success, format_aggregate

__all__ = [
    "BackendSpec",
    "ExperimentConfig",
    "RunSummary",
    "SeedMetrics",
    "aggregate",
    "area_under_curve",
    "first_success",
    "format_aggregate",
    "load_config",
    "parse_config",
]
