"""Utility-driven TTL caching: offline allocation, simulation, online control and fluid models."""
from __future__ import annotations

__version__ = "0.1.0"

from .catalog import Catalog, zipf_rates
from .solver import (
    Allocation,
    allocate,
    buffer_sizing,
    characteristic_time,
    compute_timers,
    market_equilibrium,
    solve_dual_price,
    solve_soft_capacity,
    violation_bound,
)
from .utility import CostFunction, UtilityFunction, UtilitySet, li

__all__ = [
    "Allocation",
    "Catalog",
    "CostFunction",
    "UtilityFunction",
    "UtilitySet",
    "allocate",
    "buffer_sizing",
    "characteristic_time",
    "compute_timers",
    "li",
    "market_equilibrium",
    "solve_dual_price",
    "solve_soft_capacity",
    "violation_bound",
    "zipf_rates",
]
