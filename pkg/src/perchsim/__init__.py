"""Perching-gripper simulation: mechanism, statics, impact dynamics, telemetry and cycle supervision."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .core import CalibrationSet, PerchSpec, catalog, catalog_perch, default_system
from .dynamics import ApproachScenario, ImpactModel, Outcome, simulate_attempt, sweep_envelope
from .telemetry import TelemetryTrace, read_csv, segment_cycle

__all__ = [
    "BACKEND",
    "ApproachScenario",
    "CalibrationSet",
    "ImpactModel",
    "Outcome",
    "PerchSpec",
    "TelemetryTrace",
    "catalog",
    "catalog_perch",
    "default_system",
    "read_csv",
    "segment_cycle",
    "simulate_attempt",
    "sweep_envelope",
]
