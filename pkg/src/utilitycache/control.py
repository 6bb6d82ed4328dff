"""Online timer controllers driven by cache events.

Every controller implements ``on_request(i, now, hit, gap, b_curr)``: it
observes one request, updates its prices/timers, and returns the timer the
cache should use for file ``i``.  ``gap`` is t_i - r_i with the remaining
TTL r_i measured from the file's previous request, i.e. the time since that
request (``None`` for a first request).
"""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cache.hitmodel import HitModel
from .utility import H_CEIL, H_FLOOR, CostFunction, UtilityFunction, as_list

ESTIMATOR_MODES = ("one_sample", "ewma")


class RateEstimator:
    """Per-file estimate of the mean inter-arrival time 1/lam_i from t_i - r_i.

    ``sample_on="every"`` takes a sample at every repeat request, which is
    one unbiased draw of the inter-arrival time.  ``sample_on="hit"`` only
    samples while the entry is cached, so samples are gaps shorter than the
    timer and underestimate 1/lam_i unless timers are long.  In both modes
    the reciprocal is *biased* for lam_i (Jensen), so policies whose timers
    need lam_i itself inherit that error.
    """

    def __init__(
        self,
        n: int,
        bootstrap_mean: float,
        mode: str = "one_sample",
        theta: float = 0.1,
        sample_on: str = "every",
    ):
        if mode not in ESTIMATOR_MODES:
            raise ValueError(f"estimator mode must be one of {ESTIMATOR_MODES}")
        if sample_on not in ("hit", "every"):
            raise ValueError("sample_on must be 'hit' or 'every'")
        if bootstrap_mean <= 0:
            raise ValueError("bootstrap mean inter-arrival must be positive")
        if not 0.0 < theta <= 1.0:
            raise ValueError("theta must be in (0, 1]")
        self.mode = mode
        self.theta = theta
        self.sample_on = sample_on
        self.mean = [float(bootstrap_mean)] * n
        self.samples = [0] * n

    def observe(self, i: int, sample: float | None):
        if sample is None or sample <= 0.0:
            return
        if self.mode == "one_sample" or self.samples[i] == 0:
            self.mean[i] = sample
        else:
            self.mean[i] += self.theta * (sample - self.mean[i])
        self.samples[i] += 1

    def observe_request(self, i: int, hit: bool, gap: float | None):
        if gap is None or (self.sample_on == "hit" and not hit):
            return
        self.observe(i, gap)

    def observe_interarrival(self, i: int, timer: float, remaining: float | None):
        """Record t - r; a miss (``remaining is None``) leaves the estimate as is."""
        if remaining is None:
            return
        self.observe(i, timer - remaining)

    def rate(self, i: int) -> float:
        return 1.0 / self.mean[i]

    def rates(self) -> np.ndarray:
        return 1.0 / np.asarray(self.mean)


class HitProbEstimator:
    """EWMA of hit indicators per file."""

    def __init__(self, n: int, theta_h: float = 0.05, initial: float = 0.5):
        if not 0.0 < theta_h <= 1.0:
            raise ValueError("theta_h must be in (0, 1]")
        if not 0.0 <= initial <= 1.0:
            raise ValueError("initial estimate must be a probability")
        self.theta_h = theta_h
        self.h = [float(initial)] * n

    def observe_hit(self, i: int, hit: bool) -> float:
        h = self.h[i] + self.theta_h * ((1.0 if hit else 0.0) - self.h[i])
        self.h[i] = h
        return h


LOG_T_FLOOR = 1e-300
LOG_T_CEIL = 1e300


@dataclass(frozen=True)
class HitMissRule:
    """Timer increments: +delta_m on a miss, -delta_h on a hit.

    The fluid equilibrium hit probability is delta_m / (delta_m + delta_h).

    ``step="additive"`` applies gain * delta to the timer itself (projected at
    zero).  ``step="log"`` applies gain * delta / max(alpha, delta_m) to log t
    instead; the zero-drift condition (1 - h) delta_m = h delta_h is the same,
    but the step is dimensionless and at most ``gain`` in size, so files whose
    timers differ by orders of magnitude converge alike and a price projected
    to zero cannot fling a timer away.
    """

    name: str
    step: str = "additive"
    gain: float = 1.0

    def __post_init__(self):
        if self.name not in ("proportional_fair", "max_min"):
            raise ValueError(f"unknown hit/miss preset {self.name!r}")
        if self.step not in ("additive", "log"):
            raise ValueError("step must be 'additive' or 'log'")
        if self.gain <= 0:
            raise ValueError("gain must be positive")

    @property
    def needs_rate(self) -> bool:
        return self.name == "proportional_fair"

    def delta_miss(self, rate: float, alpha: float) -> float:
        return rate if self.name == "proportional_fair" else 1.0

    def delta_hit(self, rate: float, alpha: float) -> float:
        return alpha - self.delta_miss(rate, alpha)

    def equilibrium(self, rate: float, alpha: float) -> float:
        dm = self.delta_miss(rate, alpha)
        return dm / (dm + self.delta_hit(rate, alpha))

    def apply(self, t: float, hit: bool, rate: float, alpha: float) -> float:
        """Timer after one request with outcome ``hit``."""
        dm = self.delta_miss(rate, alpha)
        delta = dm - alpha if hit else dm
        if self.step == "additive":
            return max(0.0, t + self.gain * delta)
        scale = max(alpha, dm)
        if scale <= 0.0:
            return t
        log_t = math.log(max(t, LOG_T_FLOOR)) + self.gain * delta / scale
        return math.exp(max(math.log(LOG_T_FLOOR), min(math.log(LOG_T_CEIL), log_t)))


def _alpha0(utilities: list[UtilityFunction], rates, h0: float) -> float:
    return statistics.median(u.marginal(h0, r) for u, r in zip(utilities, rates))


class _Base:
    """Shared plumbing: utilities, rate knowledge, dual price and step schedule."""

    def __init__(
        self,
        utilities,
        capacity: float,
        cache_kind: str = "reset",
        rates: Sequence[float] | None = None,
        estimator: RateEstimator | None = None,
        aggregate_rate: float | None = None,
        gamma: float | None = None,
        alpha0: float | None = None,
        decay: str = "none",
    ):
        self.utilities = as_list(utilities)
        n = len(self.utilities)
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if decay not in ("none", "sqrt"):
            raise ValueError("decay must be 'none' or 'sqrt'")
        self.n = n
        self.capacity = float(capacity)
        self.model = HitModel(cache_kind)
        self.reset = cache_kind == "reset"
        if rates is None:
            if estimator is None:
                if aggregate_rate is None:
                    raise ValueError("estimated rates need an estimator or the aggregate rate")
                estimator = RateEstimator(n, n / aggregate_rate)
            self.exact_rates = None
        else:
            self.exact_rates = [float(r) for r in rates]
            if len(self.exact_rates) != n:
                raise ValueError("one rate per file required")
        self.estimator = estimator
        self.decay = decay
        self.updates = 0
        h0 = min(max(capacity / n, H_FLOOR), H_CEIL)
        if alpha0 is None:
            try:
                alpha0 = _alpha0(self.utilities, self.rates(), h0)
            except ValueError:
                alpha0 = 1.0
        self.alpha = float(alpha0)
        # price units: one percent of the starting price per file of excess
        self.gamma = 1e-2 * max(self.alpha, 1e-300) / capacity if gamma is None else float(gamma)
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def rate(self, i: int) -> float:
        if self.exact_rates is not None:
            return self.exact_rates[i]
        return self.estimator.rate(i)

    def rates(self) -> list[float]:
        return [self.rate(i) for i in range(self.n)]

    def _observe(self, i, hit, gap):
        if self.estimator is not None:
            self.estimator.observe_request(i, hit, gap)

    def step_size(self) -> float:
        if self.decay == "sqrt":
            return self.gamma / math.sqrt(self.updates)
        return self.gamma

    def dual_step(self, b_curr: float) -> float:
        """alpha <- max(0, alpha + gamma (B_curr - B))."""
        self.updates += 1
        self.alpha = max(0.0, self.alpha + self.step_size() * (b_curr - self.capacity))
        return self.alpha

    def _marginal(self, i: int, h: float) -> float:
        h = min(max(h, H_FLOOR), H_CEIL)
        return self.utilities[i].marginal(h, self.rate(i))


class DualController(_Base):
    """Gradient descent on the dual price; every timer follows from alpha."""

    def timer(self, i: int) -> float:
        lam = self.rate(i)
        if self.alpha > 0.0:
            return self.utilities[i].timer(self.alpha, self.model.cache_kind, lam)
        h = H_CEIL
        if self.reset:
            return -math.log1p(-h) / lam
        return h / ((1.0 - h) * lam)

    def timers(self) -> np.ndarray:
        return np.array([self.timer(i) for i in range(self.n)])

    def on_request(self, i, now, hit, gap, b_curr):
        self._observe(i, hit, gap)
        self.dual_step(b_curr)
        return self.timer(i)


class _TimerController(_Base):
    def __init__(self, utilities, capacity, *, k=None, t0=None, **kw):
        super().__init__(utilities, capacity, **kw)
        h0 = min(max(self.capacity / self.n, H_FLOOR), H_CEIL)
        if k is None:
            k = [0.1 / self._marginal(i, h0) for i in range(self.n)]
        elif np.isscalar(k):
            k = [float(k)] * self.n
        self.k = [float(x) for x in k]
        if len(self.k) != self.n or min(self.k) <= 0:
            raise ValueError("need one positive gain per file")
        self.t = [0.0] * self.n if t0 is None else [float(x) for x in t0]

    def timers(self) -> np.ndarray:
        return np.array(self.t)


class PrimalController(_TimerController):
    """Gradient ascent on the soft-capacity objective, one timer at a time.

    ``alpha`` reports the current marginal storage cost C'(B_curr - B).
    """

    def __init__(self, utilities, capacity, cost: CostFunction, *, hit_estimator: HitProbEstimator | None = None, **kw):
        super().__init__(utilities, capacity, **kw)
        self.cost = cost
        self.hit_estimator = hit_estimator or HitProbEstimator(self.n, initial=min(self.capacity / self.n, 1.0))
        self.alpha = cost.marginal(0.0)

    def primal_step(self, i: int, h_hat: float, b_curr: float) -> float:
        price = self.cost.marginal(b_curr - self.capacity)
        self.alpha = price
        self.t[i] = max(0.0, self.t[i] + self.k[i] * (self._marginal(i, h_hat) - price))
        return self.t[i]

    def on_request(self, i, now, hit, gap, b_curr):
        self._observe(i, hit, gap)
        h_hat = self.hit_estimator.observe_hit(i, hit)
        return self.primal_step(i, h_hat, b_curr)


class PrimalDualController(_TimerController):
    def __init__(self, utilities, capacity, *, hit_estimator: HitProbEstimator | None = None, **kw):
        super().__init__(utilities, capacity, **kw)
        self.hit_estimator = hit_estimator or HitProbEstimator(self.n, initial=min(self.capacity / self.n, 1.0))

    def primal_dual_step(self, i: int, h_hat: float, b_curr: float) -> float:
        self.t[i] = max(0.0, self.t[i] + self.k[i] * (self._marginal(i, h_hat) - self.alpha))
        self.dual_step(b_curr)
        return self.t[i]

    def on_request(self, i, now, hit, gap, b_curr):
        self._observe(i, hit, gap)
        h_hat = self.hit_estimator.observe_hit(i, hit)
        return self.primal_dual_step(i, h_hat, b_curr)


class HitMissController(_Base):
    """Timers nudged by hits and misses; alpha follows the dual update.

    The max_min preset never reads a request rate.  Timers start at zero for
    additive steps and at the bootstrap timer (uniform h = B/N at the
    bootstrap rate) for log steps, which cannot leave zero.
    """

    def __init__(self, utilities, capacity, rule: HitMissRule, *, t0=None, **kw):
        super().__init__(utilities, capacity, **kw)
        self.rule = rule
        if t0 is None:
            if rule.step == "log":
                h0 = min(self.capacity / self.n, H_CEIL)
                t0 = [float(self.model.timer_for(h0, self.rate(i))) for i in range(self.n)]
            else:
                t0 = [0.0] * self.n
        self.t = [float(x) for x in t0]

    def timers(self) -> np.ndarray:
        return np.array(self.t)

    def hit_miss_step(self, i: int, hit: bool) -> float:
        rate = self.rate(i) if self.rule.needs_rate else 1.0
        self.t[i] = self.rule.apply(self.t[i], hit, rate, self.alpha)
        return self.t[i]

    def on_request(self, i, now, hit, gap, b_curr):
        self._observe(i, hit, gap)
        t = self.hit_miss_step(i, hit)
        self.dual_step(b_curr)
        return t
