"""Bracketed bisection for monotone scalar equations."""
from __future__ import annotations

import math
from typing import Callable


class BracketError(ValueError):
    """No sign change could be found for a monotone root."""


def expand_upper(fn: Callable[[float], float], start: float, *, limit: float = 1e300) -> float:
    """Double ``start`` until ``fn`` turns nonpositive; ``fn`` must be nonincreasing."""
    x = start
    while fn(x) > 0.0:
        x *= 2.0
        if x > limit:
            raise BracketError(f"no sign change below {limit:g}")
    return x


def bisect_decreasing(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> float:
    """Root of a nonincreasing ``fn`` with ``fn(lo) >= 0 >= fn(hi)``.

    Runs until the bracket collapses to adjacent floats (or ``max_iter``),
    so the root is as accurate as the arithmetic allows. Raises
    BracketError if the best residual still exceeds ``tol``.
    """
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo < 0.0 or f_hi > 0.0:
        raise BracketError(f"f({lo:g})={f_lo:g}, f({hi:g})={f_hi:g}: no sign change")
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    best, best_res = (lo, abs(f_lo)) if abs(f_lo) < abs(f_hi) else (hi, abs(f_hi))
    for _ in range(max_iter):
        # geometric split while the bracket spans decades, arithmetic after
        if lo > 0.0 and hi > 4.0 * lo:
            mid = math.sqrt(lo * hi)
        else:
            mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        f_mid = fn(mid)
        if abs(f_mid) < best_res:
            best, best_res = mid, abs(f_mid)
        if f_mid == 0.0:
            break
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
    if best_res > tol:
        raise BracketError(f"bisection stalled with residual {best_res:g} > {tol:g}")
    return best
