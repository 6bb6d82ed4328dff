"""Offline allocation: dual price, elastic capacity, timers, characteristic time,
market equilibrium and buffer sizing."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cache.hitmodel import HitModel
from .catalog import Catalog
from .roots import BracketError, bisect_decreasing, expand_upper
from .utility import H_CEIL, H_FLOOR, CostFunction, UtilitySet, as_list

ALPHA_FLOOR = 1e-12
RESIDUAL_TOL = 1e-10


class InfeasibleCapacityError(ValueError):
    pass


class ClampWarning(RuntimeWarning):
    """Some hit probabilities sit on the [H_FLOOR, H_CEIL] guard."""


@dataclass
class Allocation:
    catalog: Catalog
    alpha: float
    h: np.ndarray
    t: np.ndarray
    capacity: float
    cache_kind: str
    clamped: np.ndarray

    @property
    def occupancy(self) -> float:
        return float(self.h.sum())


@dataclass(frozen=True)
class SizingPlan:
    buffer: float
    headroom: float
    bound: float

    @property
    def provisioned(self) -> int:
        return math.ceil(self.buffer * (1.0 + self.headroom))


@dataclass
class MarketEquilibrium:
    price: float
    payments: np.ndarray
    h: np.ndarray


def _check_capacity(capacity: float, n: int):
    if not 0.0 < capacity < n:
        raise InfeasibleCapacityError(f"capacity B={capacity!r} must lie in (0, N={n})")


def _clamped(h: np.ndarray) -> np.ndarray:
    return (h <= H_FLOOR) | (h >= H_CEIL)


def compute_timers(alpha: float, catalog: Catalog, utilities, cache_kind: str = "reset") -> np.ndarray:
    """Per-file timers realizing h_i = U_i'^-1(alpha) in a TTL cache of the given kind."""
    us = UtilitySet.coerce(utilities)
    h = us.inverse_marginal(alpha, catalog.rates)
    if _clamped(h).any():
        warnings.warn(f"{int(_clamped(h).sum())} hit probabilities clamped", ClampWarning, stacklevel=2)
    return us.timers(alpha, cache_kind, catalog.rates)


def _allocation(catalog, us, alpha, h, capacity, cache_kind) -> Allocation:
    t = us.timers(alpha, cache_kind, catalog.rates)
    return Allocation(catalog, alpha, h, t, capacity, cache_kind, _clamped(h))


def solve_dual_price(catalog: Catalog, utilities, capacity: float, cache_kind: str = "reset") -> Allocation:
    """Dual price alpha* with sum_i U_i'^-1(alpha*) = B, plus the implied h and timers."""
    _check_capacity(capacity, catalog.n)
    us = UtilitySet.coerce(utilities)
    if len(us) != catalog.n:
        raise ValueError("one utility per file required")
    rates = catalog.rates

    def excess(alpha):
        return float(us.inverse_marginal(alpha, rates).sum()) - capacity

    tol = RESIDUAL_TOL * max(1.0, capacity)
    lo = ALPHA_FLOOR
    if excess(lo) < 0.0:
        raise BracketError(
            f"capacity {capacity} unreachable: hit-probability guard caps the sum at {excess(lo) + capacity:.6g}"
        )
    hi = expand_upper(excess, 1.0)
    alpha = bisect_decreasing(excess, lo, hi, tol=tol)
    h = us.inverse_marginal(alpha, rates)
    return _allocation(catalog, us, alpha, h, capacity, cache_kind)


def lfu_allocation(catalog: Catalog, weights, capacity: float, cache_kind: str = "reset") -> Allocation:
    """beta = 0: fill the cache with the heaviest files.

    Ties go to the lower file id. A fractional capacity gives the next file
    a fractional hit probability.
    """
    _check_capacity(capacity, catalog.n)
    w = np.asarray(weights, dtype=float)
    order = np.lexsort((np.asarray(catalog.ids), -w))
    h = np.zeros(catalog.n)
    full = int(math.floor(capacity))
    h[order[:full]] = 1.0
    if full < catalog.n:
        h[order[full]] = capacity - full
    t = HitModel(cache_kind).timer_for(h, catalog.rates)
    return Allocation(catalog, math.nan, h, t, capacity, cache_kind, np.zeros(catalog.n, bool))


def max_min_allocation(catalog: Catalog, capacity: float, cache_kind: str = "reset") -> Allocation:
    """beta -> inf (and any identical utilities): h_i = B/N."""
    _check_capacity(capacity, catalog.n)
    h = np.full(catalog.n, capacity / catalog.n)
    t = HitModel(cache_kind).timer_for(h, catalog.rates)
    return Allocation(catalog, math.nan, h, t, capacity, cache_kind, np.zeros(catalog.n, bool))


def allocate(catalog: Catalog, utilities, capacity: float, cache_kind: str = "reset") -> Allocation:
    """Dispatch to the closed-form special cases or the generic fixed point."""
    us = as_list(utilities)
    special = [u for u in us if not u.strictly_concave]
    if not special:
        return solve_dual_price(catalog, utilities, capacity, cache_kind)
    if len(special) != len(us) or len({u.beta for u in us}) != 1:
        raise ValueError("cannot mix beta=0/beta=inf utilities with other kinds")
    if us[0].beta == 0.0:
        weights = [u.effective_weight() for u in us]
        return lfu_allocation(catalog, weights, capacity, cache_kind)
    return max_min_allocation(catalog, capacity, cache_kind)


def solve_soft_capacity(
    catalog: Catalog, utilities, cost: CostFunction, capacity: float, cache_kind: str = "reset"
) -> tuple[float, Allocation]:
    """Elastic capacity B* = sum_i U_i'^-1(C'(B* - B))."""
    us = UtilitySet.coerce(utilities)
    rates = catalog.rates
    n = catalog.n

    def hits(b_star):
        price = cost.marginal(b_star - capacity)
        if price <= 0.0:
            return np.full(n, H_CEIL)
        return us.inverse_marginal(price, rates)

    def gap(b_star):
        return float(hits(b_star).sum()) - b_star

    lo, hi = 0.0, float(n)
    if not cost.strictly_increasing_marginal:
        lo = max(lo, capacity)
    try:
        b_star = bisect_decreasing(gap, lo, hi, tol=RESIDUAL_TOL * max(1.0, capacity, n))
    except BracketError as exc:
        raise InfeasibleCapacityError(f"soft-capacity fixed point has no root: {exc}") from exc
    h = hits(b_star)
    price = cost.marginal(b_star - capacity)
    if price <= 0.0:
        t = HitModel(cache_kind).timer_for(h, rates)
        return b_star, Allocation(catalog, price, h, t, b_star, cache_kind, _clamped(h))
    return b_star, _allocation(catalog, us, price, h, b_star, cache_kind)


def characteristic_time(catalog: Catalog, capacity: float, policy: str = "lru") -> float:
    """T with sum_i h_i(T) = B for a common timer T (Che approximation)."""
    _check_capacity(capacity, catalog.n)
    rates = catalog.rates
    if policy == "lru":
        def filled(T):
            return float(-np.expm1(-rates * T).sum()) - capacity
    elif policy == "fifo":
        def filled(T):
            x = rates * T
            return float((x / (1.0 + x)).sum()) - capacity
    else:
        raise ValueError(f"policy must be 'lru' or 'fifo', got {policy!r}")

    def shortfall(T):
        return -filled(T)

    hi = expand_upper(shortfall, 1.0 / rates.max())
    return bisect_decreasing(shortfall, 0.0, hi, tol=RESIDUAL_TOL * max(1.0, capacity))


def market_equilibrium(catalog: Catalog, utilities, capacity: float) -> MarketEquilibrium:
    """Price r per unit hit probability at which providers' demands fill the cache.

    Each provider pays w_i = r h_i; with those payments the proportionally
    fair split h_i = w_i B / sum_j w_j gives back the same h.
    """
    alloc = solve_dual_price(catalog, utilities, capacity)
    r = alloc.alpha
    return MarketEquilibrium(price=r, payments=r * alloc.h, h=alloc.h)


def violation_bound(capacity: float, eps: float) -> float:
    """Chernoff bound on P(occupancy >= B(1+eps)) for independent indicators."""
    if capacity <= 0 or eps < 0:
        raise ValueError("need B > 0 and eps >= 0")
    return math.exp(-eps * eps * capacity / 3.0)


def buffer_sizing(n: int, s: float, scale: float = 1.0) -> SizingPlan:
    """Sublinear buffer B = c N^(1-s) with headroom eps = N^(-(1-s)/3) for Zipf(s<1)."""
    if not 0.0 < s < 1.0:
        raise NotImplementedError("buffer sizing is only defined for 0 < s < 1")
    if n < 1 or scale <= 0:
        raise ValueError("need N >= 1 and c > 0")
    b = scale * n ** (1.0 - s)
    eps = n ** (-(1.0 - s) / 3.0)
    return SizingPlan(buffer=b, headroom=eps, bound=violation_bound(b, eps))
