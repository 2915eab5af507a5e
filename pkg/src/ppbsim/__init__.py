"""Cycle-level simulator for MESI coherence on a mesh NoC, with optional
phase-priority arbitration of coherence messages."""

from .config import ConfigError, SystemConfig, load_config
from .metrics import DeltaReport, StatsReport, compare_reports
from .phase import PhaseTag, Winner, compare_priority
from .system import SimulationAbort, System, build_system, run, simulate, step
from .workload import TraceRecord, gen_race, gen_synthetic, load_trace, parse_trace, save_trace

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DeltaReport",
    "PhaseTag",
    "SimulationAbort",
    "StatsReport",
    "System",
    "SystemConfig",
    "TraceRecord",
    "Winner",
    "build_system",
    "compare_priority",
    "compare_reports",
    "gen_race",
    "gen_synthetic",
    "load_config",
    "load_trace",
    "parse_trace",
    "run",
    "save_trace",
    "simulate",
    "step",
]
