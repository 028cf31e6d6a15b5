"""Agent-based model of an online dating platform and interventions against racial homogamy."""

from .core import (
    AttributeSchema,
    ConfigurationError,
    DegenerateMassError,
    DomainError,
    Partial,
    SchemaError,
)
from .interventions import FilterMode, InterventionSet
from .metrics import RunLog, RunMetrics, compute_metrics
from .platform import Platform, run, simulate
from .scenario import Scenario, desk_scale, load_scenario

__all__ = [
    "AttributeSchema",
    "ConfigurationError",
    "DegenerateMassError",
    "DomainError",
    "FilterMode",
    "InterventionSet",
    "Partial",
    "Platform",
    "RunLog",
    "RunMetrics",
    "Scenario",
    "SchemaError",
    "compute_metrics",
    "desk_scale",
    "load_scenario",
    "run",
    "simulate",
]

__version__ = "0.1.0"
