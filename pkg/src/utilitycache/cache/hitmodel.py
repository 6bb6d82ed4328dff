"""Hit probability of a file with Poisson requests under a fixed TTL timer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CACHE_KINDS = ("non_reset", "reset")


@dataclass(frozen=True)
class HitModel:
    """``non_reset``: h = 1 - 1/(1 + lam t); ``reset``: h = 1 - exp(-lam t).

    All methods broadcast over numpy arrays.
    """

    cache_kind: str = "reset"

    def __post_init__(self):
        if self.cache_kind not in CACHE_KINDS:
            raise ValueError(f"cache_kind must be one of {CACHE_KINDS}, got {self.cache_kind!r}")

    def hit_prob(self, t, lam):
        x = np.multiply(lam, t)
        if self.cache_kind == "reset":
            return -np.expm1(-x)
        return x / (1.0 + x)

    def timer_for(self, h, lam):
        """Inverse of hit_prob: timer giving hit probability h."""
        h = np.asarray(h, dtype=float)
        with np.errstate(divide="ignore"):
            if self.cache_kind == "reset":
                t = -np.log1p(-h) / lam
            else:
                t = h / ((1.0 - h) * lam)
        return t

    def dh_dt(self, t, lam):
        x = np.multiply(lam, t)
        if self.cache_kind == "reset":
            return lam * np.exp(-x)
        return lam / (1.0 + x) ** 2

    def sensitivity(self, h, lam):
        """g(h) = f'(f^-1(h)): rate of change of h per unit timer at hit probability h."""
        one_minus = 1.0 - np.asarray(h, dtype=float)
        if self.cache_kind == "reset":
            return lam * one_minus
        return lam * one_minus**2
