"""Utility functions of hit probability and convex storage-cost functions.

Three utility families are supported:

* ``beta_fair``  -- isoelastic ``w h^(1-beta) / (1-beta)`` (``w log h`` at beta=1).
  beta=0 (LFU / throughput) and beta=inf (max-min) are kept as special
  cases that only admit closed-form allocations.
* ``fifo_equiv`` -- ``lam (log h - h)``; maximizing it reproduces a FIFO cache.
* ``lru_equiv``  -- ``lam li(1 - h)``; maximizing it reproduces an LRU cache.

A utility may be *rate-scaled*: its weight is multiplied by the request rate
of the file.  Controllers that only know an estimate of the rate pass it
through the ``rate=`` keyword, which overrides the stored rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import special

H_FLOOR = 1e-12
H_CEIL = 1.0 - 1e-12

KINDS = ("beta_fair", "fifo_equiv", "lru_equiv")
COST_KINDS = ("exponential", "quadratic_ramp")


class UtilityDomainError(ValueError):
    """Argument outside the domain of a utility or cost function."""


class UnsupportedUtilityError(ValueError):
    """Operation not defined for a non-strictly-concave utility (beta=0, beta=inf)."""


def clamp_probability(h):
    return np.clip(h, H_FLOOR, H_CEIL)


def li(x: float) -> float:
    """Logarithmic integral ``int_0^x dt / ln t`` for ``0 <= x < 1``, as Ei(ln x)."""
    if not 0.0 <= x < 1.0:
        raise UtilityDomainError(f"li(x) needs 0 <= x < 1, got {x!r}")
    if x == 0.0:
        return 0.0
    return float(special.expi(math.log(x)))


def li_one_minus(h):
    """li(1 - h) computed from log1p(-h), so it stays accurate for small h."""
    h = np.asarray(h, dtype=float)
    with np.errstate(divide="ignore"):
        return special.expi(np.log1p(-h))


@dataclass(frozen=True)
class UtilityFunction:
    kind: str
    weight: float = 1.0
    beta: float = 1.0
    rate: float | None = None
    rate_weighted: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")
        if self.kind == "beta_fair" and self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.kind != "beta_fair" or self.rate_weighted:
            if self.rate is not None and self.rate <= 0:
                raise ValueError("rate must be positive")

    # -- constructors -----------------------------------------------------

    @classmethod
    def beta_fair(cls, beta: float, weight: float = 1.0) -> "UtilityFunction":
        return cls("beta_fair", weight=weight, beta=beta)

    @classmethod
    def rate_weighted_beta_fair(cls, beta: float, rate: float, weight: float = 1.0) -> "UtilityFunction":
        return cls("beta_fair", weight=weight, beta=beta, rate=rate, rate_weighted=True)

    @classmethod
    def fifo(cls, rate: float) -> "UtilityFunction":
        return cls("fifo_equiv", rate=rate)

    @classmethod
    def lru(cls, rate: float) -> "UtilityFunction":
        return cls("lru_equiv", rate=rate)

    # -- properties -------------------------------------------------------

    @property
    def rate_scaled(self) -> bool:
        return self.kind != "beta_fair" or self.rate_weighted

    @property
    def strictly_concave(self) -> bool:
        if self.kind != "beta_fair":
            return True
        return 0.0 < self.beta < math.inf

    def _rate(self, rate):
        lam = self.rate if rate is None else rate
        if lam is None:
            raise ValueError(f"{self.kind} utility needs a request rate")
        return float(lam)

    def effective_weight(self, rate: float | None = None) -> float:
        if self.kind == "beta_fair" and not self.rate_weighted:
            return self.weight
        return self.weight * self._rate(rate)

    def _require_concave(self):
        if not self.strictly_concave:
            raise UnsupportedUtilityError(
                f"beta={self.beta} utility is not strictly concave; use the closed-form allocation"
            )

    # -- evaluation -------------------------------------------------------

    def value(self, h: float, rate: float | None = None) -> float:
        """U(h)."""
        self._require_concave()
        upper_ok = (self.kind == "beta_fair" and self.beta < 1) or self.kind == "fifo_equiv"
        if not (0.0 < h < 1.0 or (h == 1.0 and upper_ok)):
            raise UtilityDomainError(f"h={h!r} outside the domain of {self.kind}")
        w = self.effective_weight(rate)
        if self.kind == "lru_equiv":
            return w * float(li_one_minus(h))
        if self.kind == "fifo_equiv":
            return w * (math.log(h) - h)
        if self.beta == 1.0:
            return w * math.log(h)
        return w * h ** (1.0 - self.beta) / (1.0 - self.beta)

    def marginal(self, h: float, rate: float | None = None) -> float:
        """U'(h) on the open interval (0, 1)."""
        self._require_concave()
        if not 0.0 < h < 1.0:
            raise UtilityDomainError(f"marginal utility needs 0 < h < 1, got {h!r}")
        w = self.effective_weight(rate)
        if self.kind == "lru_equiv":
            return -w / math.log1p(-h)
        if self.kind == "fifo_equiv":
            return w / h - w
        return w * h ** (-self.beta)

    def inverse_marginal(self, alpha: float, rate: float | None = None) -> float:
        """Hit probability h with U'(h) = alpha, clamped to [H_FLOOR, H_CEIL]."""
        self._require_concave()
        if not alpha > 0:
            raise UtilityDomainError(f"dual price must be positive, got {alpha!r}")
        w = self.effective_weight(rate)
        if self.kind == "lru_equiv":
            h = -math.expm1(-w / alpha)
        elif self.kind == "fifo_equiv":
            x = w / alpha
            h = x / (1.0 + x)
        else:
            h = (w / alpha) ** (1.0 / self.beta)
        return min(max(h, H_FLOOR), H_CEIL)

    def timer(self, alpha: float, cache_kind: str, rate: float | None = None) -> float:
        """Timer t with hit probability U'^-1(alpha) for a file of rate ``rate``.

        For fifo/lru kinds the timer is computed from w/alpha directly rather
        than through the clamped h, so t = 1/alpha holds exactly in the
        matching cache even when the rate estimate is far off.
        """
        lam = self.rate if rate is None else rate
        if lam is None:
            raise ValueError("timer needs a request rate")
        if not alpha > 0:
            raise UtilityDomainError(f"dual price must be positive, got {alpha!r}")
        if self.kind != "beta_fair":
            x = self.effective_weight(rate) / alpha
            if self.kind == "lru_equiv":
                try:
                    odds = math.expm1(x)
                except OverflowError:
                    odds = math.inf
                log_miss = x
            else:
                log_miss, odds = math.log1p(x), x
        else:
            h = self.inverse_marginal(alpha, rate)
            log_miss, odds = -math.log1p(-h), h / (1.0 - h)
        return (log_miss if cache_kind == "reset" else odds) / lam


@dataclass
class UtilitySet:
    """Vectorized view over one utility per file.

    Solvers and fluid integrators evaluate every file at once; this keeps
    the per-kind formulas in numpy instead of a Python loop.
    """

    utilities: list[UtilityFunction]
    _code: np.ndarray = field(init=False, repr=False)
    _weight: np.ndarray = field(init=False, repr=False)
    _beta: np.ndarray = field(init=False, repr=False)
    _rate: np.ndarray = field(init=False, repr=False)
    _scaled: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        us = list(self.utilities)
        self.utilities = us
        self._code = np.array([KINDS.index(u.kind) for u in us], dtype=int)
        self._weight = np.array([u.weight for u in us], dtype=float)
        self._beta = np.array([u.beta if u.kind == "beta_fair" else 1.0 for u in us], dtype=float)
        self._rate = np.array([np.nan if u.rate is None else u.rate for u in us], dtype=float)
        self._scaled = np.array([u.rate_scaled for u in us], dtype=bool)

    @classmethod
    def coerce(cls, utilities) -> "UtilitySet":
        if isinstance(utilities, UtilitySet):
            return utilities
        return cls(list(utilities))

    @classmethod
    def lru(cls, rates: Iterable[float]) -> "UtilitySet":
        return cls([UtilityFunction.lru(float(r)) for r in rates])

    @classmethod
    def fifo(cls, rates: Iterable[float]) -> "UtilitySet":
        return cls([UtilityFunction.fifo(float(r)) for r in rates])

    @classmethod
    def beta_fair(cls, beta: float, weights: Iterable[float]) -> "UtilitySet":
        return cls([UtilityFunction.beta_fair(beta, float(w)) for w in weights])

    def __len__(self):
        return len(self.utilities)

    def __getitem__(self, i) -> UtilityFunction:
        return self.utilities[i]

    @property
    def strictly_concave(self) -> bool:
        return all(u.strictly_concave for u in self.utilities)

    @property
    def betas(self) -> np.ndarray:
        return self._beta.copy()

    def weights(self, rates=None) -> np.ndarray:
        lam = self._rate if rates is None else np.asarray(rates, dtype=float)
        w = self._weight.copy()
        w[self._scaled] *= lam[self._scaled]
        if np.isnan(w).any():
            raise ValueError("rate-scaled utility without a request rate")
        return w

    def _check(self):
        if not self.strictly_concave:
            raise UnsupportedUtilityError("set contains beta=0 or beta=inf utilities")

    def inverse_marginal(self, alpha: float, rates=None) -> np.ndarray:
        self._check()
        if not alpha > 0:
            raise UtilityDomainError(f"dual price must be positive, got {alpha!r}")
        w = self.weights(rates)
        x = w / alpha
        code = self._code
        h = np.empty_like(x)
        m = code == 0
        h[m] = x[m] ** (1.0 / self._beta[m])
        m = code == 1
        h[m] = x[m] / (1.0 + x[m])
        m = code == 2
        h[m] = -np.expm1(-x[m])
        return np.clip(h, H_FLOOR, H_CEIL)

    def timers(self, alpha: float, cache_kind: str, rates=None) -> np.ndarray:
        """Vector form of UtilityFunction.timer; ``rates`` default to the stored ones."""
        lam = self._rate if rates is None else np.asarray(rates, dtype=float)
        x = self.weights(lam) / alpha
        h = self.inverse_marginal(alpha, lam)
        log_miss = -np.log1p(-h)
        with np.errstate(over="ignore"):
            odds = h / (1.0 - h)
            m = self._code == 2
            log_miss[m] = x[m]
            odds[m] = np.expm1(x[m])
        m = self._code == 1
        log_miss[m] = np.log1p(x[m])
        odds[m] = x[m]
        return (log_miss if cache_kind == "reset" else odds) / lam

    def marginal(self, h, rates=None) -> np.ndarray:
        self._check()
        h = np.asarray(h, dtype=float)
        if np.any((h <= 0.0) | (h >= 1.0)):
            raise UtilityDomainError("marginal utility needs 0 < h < 1")
        w = self.weights(rates)
        code = self._code
        out = np.empty_like(h)
        m = code == 0
        out[m] = w[m] * h[m] ** (-self._beta[m])
        m = code == 1
        out[m] = w[m] / h[m] - w[m]
        m = code == 2
        out[m] = -w[m] / np.log1p(-h[m])
        return out

    def value(self, h, rates=None) -> np.ndarray:
        self._check()
        h = np.asarray(h, dtype=float)
        if np.any((h <= 0.0) | (h >= 1.0)):
            raise UtilityDomainError("utility values are evaluated on 0 < h < 1")
        w = self.weights(rates)
        code, beta = self._code, self._beta
        out = np.empty_like(h)
        m = (code == 0) & (beta == 1.0)
        out[m] = w[m] * np.log(h[m])
        m = (code == 0) & (beta != 1.0)
        out[m] = w[m] * h[m] ** (1.0 - beta[m]) / (1.0 - beta[m])
        m = code == 1
        out[m] = w[m] * (np.log(h[m]) - h[m])
        m = code == 2
        out[m] = w[m] * li_one_minus(h[m])
        return out


@dataclass(frozen=True)
class CostFunction:
    """Convex nondecreasing penalty on storage used beyond the nominal capacity.

    exponential:    C(x) = (c/a) e^(a x),       C'(x) = c e^(a x)
    quadratic_ramp: C(x) = (c a / 2) max(x,0)^2, C'(x) = c a max(x, 0)
    """

    kind: str = "exponential"
    scale: float = 1.0
    stiffness: float = 1.0

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.scale <= 0 or self.stiffness <= 0:
            raise ValueError("cost scale and stiffness must be positive")

    @property
    def strictly_increasing_marginal(self) -> bool:
        return self.kind == "exponential"

    def cost(self, x: float) -> float:
        if self.kind == "exponential":
            return self.scale / self.stiffness * math.exp(self.stiffness * x)
        xp = max(x, 0.0)
        return 0.5 * self.scale * self.stiffness * xp * xp

    def marginal(self, x: float) -> float:
        if self.kind == "exponential":
            return self.scale * math.exp(self.stiffness * x)
        return self.scale * self.stiffness * max(x, 0.0)

    def inverse_marginal(self, price: float) -> float:
        """Storage excess x with C'(x) = price (exponential kind only)."""
        if self.kind != "exponential":
            raise UnsupportedUtilityError("quadratic_ramp marginal cost is not invertible at 0")
        if price <= 0:
            raise UtilityDomainError("price must be positive")
        return math.log(price / self.scale) / self.stiffness


def cost(c: CostFunction, x: float) -> float:
    return c.cost(x)


def cost_marginal(c: CostFunction, x: float) -> float:
    return c.marginal(x)


def as_list(utilities: Sequence[UtilityFunction] | UtilitySet) -> list[UtilityFunction]:
    return list(utilities.utilities if isinstance(utilities, UtilitySet) else utilities)
