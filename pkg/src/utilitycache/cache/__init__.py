"""Discrete-event TTL cache engine, workload generation and metrics."""
from .hitmodel import CACHE_KINDS, HitModel
from .metrics import Metrics
from .simulate import ConfigurationError, Controller, SimulationResult, run_simulation
from .state import CacheState, OccupancyTracker
from .workload import RequestStream

__all__ = [
    "CACHE_KINDS",
    "CacheState",
    "ConfigurationError",
    "Controller",
    "HitModel",
    "Metrics",
    "OccupancyTracker",
    "RequestStream",
    "SimulationResult",
    "run_simulation",
]
