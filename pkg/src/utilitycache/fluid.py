"""Deterministic (fluid) versions of the online controllers and their Lyapunov functions.

Each integrator takes explicit Euler steps with projection onto the feasible
set (alpha >= 0, t >= 0).  A step is rejected and the step size halved when
it would raise the Lyapunov function by more than ``1e-9 * max(1, V(0))``;
after an accepted step the step size grows back toward ``dt``.  The primal
and primal-dual integrators evolve timers, and hit probabilities follow from
the cache's hit model, so h always stays inside [0, 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cache.hitmodel import HitModel
from .catalog import Catalog
from .solver import ALPHA_FLOOR, solve_dual_price, solve_soft_capacity
from .utility import H_CEIL, H_FLOOR, CostFunction, UtilitySet

SIMPSON_PANELS = 256
GROWTH = 1.25
MAX_HALVINGS = 60
MAX_DH = 0.05  # largest hit-probability change accepted in one step


class StepRejectionError(RuntimeError):
    """The Lyapunov function kept increasing even for a vanishing step."""


@dataclass
class FluidTrajectory:
    """Accepted steps of one integration.

    ``time``, ``alpha`` and ``V`` hold every accepted step; ``h`` holds the
    hit-probability vector at every ``record_every``-th step (and the last).
    """

    time: np.ndarray
    alpha: np.ndarray
    V: np.ndarray
    h_steps: np.ndarray
    h: np.ndarray
    rejected: int
    tol: float
    optimum_h: np.ndarray
    optimum_alpha: float
    extra: dict = field(default_factory=dict)

    @property
    def V0(self) -> float:
        return float(self.V[0])

    @property
    def final_h(self) -> np.ndarray:
        return self.h[-1]

    @property
    def final_alpha(self) -> float:
        return float(self.alpha[-1])

    @property
    def max_increase(self) -> float:
        if self.V.size < 2:
            return 0.0
        return float(np.max(np.diff(self.V)))

    @property
    def monotone(self) -> bool:
        return self.max_increase <= self.tol

    @property
    def reduction(self) -> float:
        """V(T_end) / V(0); zero when the run started at the optimum."""
        return float(self.V[-1] / self.V[0]) if self.V[0] > 0 else 0.0

    def rows(self, max_files: int = 32):
        """(time, alpha, V, h_1..h_n) rows, or (time, alpha, V, sum_h) beyond ``max_files``."""
        for k, step in enumerate(self.h_steps):
            h = self.h[k]
            lead = (float(self.time[step]), float(self.alpha[step]), float(self.V[step]))
            if h.size <= max_files:
                yield lead + tuple(float(x) for x in h)
            else:
                yield lead + (float(h.sum()),)

    def header(self, max_files: int = 32) -> list[str]:
        n = self.h.shape[1]
        cols = ["time", "alpha", "V"]
        return cols + ([f"h_{i}" for i in range(1, n + 1)] if n <= max_files else ["sum_h"])


def _hits(us: UtilitySet, alpha: float, rates) -> np.ndarray:
    if alpha <= ALPHA_FLOOR:
        return np.full(len(us), H_CEIL)
    return us.inverse_marginal(alpha, rates)


def dual_objective(us: UtilitySet, alpha: float, capacity: float, rates) -> float:
    """D(alpha) = sum_i [U_i(h_i) - alpha h_i] + alpha B with h_i = U_i'^-1(alpha)."""
    h = _hits(us, alpha, rates)
    return float(np.sum(us.value(h, rates) - alpha * h) + alpha * capacity)


def soft_objective(us: UtilitySet, cost: CostFunction, h, capacity: float, rates) -> float:
    """W(h) = sum_i U_i(h_i) - C(sum_i h_i - B)."""
    h = np.clip(np.asarray(h, dtype=float), H_FLOOR, H_CEIL)
    return float(us.value(h, rates).sum() - cost.cost(float(h.sum()) - capacity))


def _simpson_weights(panels: int) -> np.ndarray:
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * panels)


_SIMPSON = _simpson_weights(SIMPSON_PANELS)
_NODES = np.linspace(0.0, 1.0, SIMPSON_PANELS + 1)


def primal_dual_lyapunov(h, alpha, h_star, alpha_star, k, gamma, model: HitModel, rates) -> float:
    """sum_i int_{h*_i}^{h_i} (x - h*_i) / (k_i g_i(x)) dx + (alpha - alpha*)^2 / (2 gamma)."""
    h = np.asarray(h, dtype=float)
    h_star = np.asarray(h_star, dtype=float)
    span = h - h_star
    x = h_star[:, None] + span[:, None] * _NODES[None, :]
    g = model.sensitivity(np.minimum(x, H_CEIL), np.asarray(rates, dtype=float)[:, None])
    integrand = (x - h_star[:, None]) / (np.asarray(k, dtype=float)[:, None] * g)
    integral = span * (integrand @ _SIMPSON)
    return float(integral.sum() + (alpha - alpha_star) ** 2 / (2.0 * gamma))


def _gains(k, n: int) -> np.ndarray:
    k = np.full(n, float(k)) if np.isscalar(k) else np.asarray(k, dtype=float)
    if k.shape != (n,) or np.any(k <= 0):
        raise ValueError("need one positive gain per file")
    return k


def _initial_timers(model: HitModel, state0, rates) -> np.ndarray:
    h0 = np.clip(np.asarray(state0, dtype=float), 0.0, H_CEIL)
    return np.asarray(model.timer_for(h0, rates), dtype=float)


def _integrate(step, lyapunov, x0, dt0: float, t_end: float, record_every: int, observe, stop_below=None):
    """Shared Euler loop; ``step(x, dt)`` proposes, ``lyapunov(x)`` scores, ``observe(x)`` -> (alpha, h).

    Besides a Lyapunov increase, a step is also halved when some h_i would
    move by more than MAX_DH: a timer overshooting deep into saturation
    (h = 1 to machine precision) would otherwise take very long to return.
    With ``stop_below`` the run ends early once V <= stop_below * V(0).
    """
    if dt0 <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and T_end >= 0")
    x = x0
    v = lyapunov(x)
    tol = 1e-9 * max(1.0, v)
    times, vs, alphas, hs, h_steps = [0.0], [v], [], [], [0]
    a, h = observe(x)
    alphas.append(a)
    hs.append(h)
    h_prev = h
    now, dt, rejected, k = 0.0, dt0, 0, 0
    floor = -1.0 if stop_below is None else stop_below * v
    while now < t_end * (1.0 - 1e-12) and v > floor:
        dt_try = min(dt, t_end - now)
        for _ in range(MAX_HALVINGS):
            cand = step(x, dt_try)
            v_new = lyapunov(cand)
            if v_new <= v + tol and np.max(np.abs(observe(cand)[1] - h_prev)) <= MAX_DH:
                break
            rejected += 1
            dt_try *= 0.5
        else:
            raise StepRejectionError(f"Lyapunov function increases at t={now:.6g} for every step size")
        x, v = cand, v_new
        now += dt_try
        k += 1
        dt = min(dt0, dt_try * GROWTH)
        times.append(now)
        vs.append(v)
        a, h = observe(x)
        h_prev = h
        alphas.append(a)
        if k % record_every == 0:
            hs.append(h)
            h_steps.append(k)
    if h_steps[-1] != k:
        hs.append(observe(x)[1])
        h_steps.append(k)
    return np.array(times), np.array(alphas), np.array(vs), np.array(h_steps), np.array(hs), rejected, tol


def integrate_dual(
    catalog: Catalog,
    utilities,
    capacity: float,
    gamma: float,
    alpha0: float,
    dt: float | None = None,
    t_end: float = 100.0,
    record_every: int = 1,
    stop_below: float | None = None,
) -> FluidTrajectory:
    """alpha' = gamma (sum_i U_i'^-1(alpha) - B), projected at zero; V = D(alpha) - D(alpha*)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    us = UtilitySet.coerce(utilities)
    rates = catalog.rates
    opt = solve_dual_price(catalog, us, capacity)
    d_star = dual_objective(us, opt.alpha, capacity, rates)

    def step(a, dt_):
        return max(0.0, a + dt_ * gamma * (float(_hits(us, a, rates).sum()) - capacity))

    def lyap(a):
        return max(0.0, dual_objective(us, a, capacity, rates) - d_star)

    out = _integrate(
        step, lyap, float(alpha0), dt or 1e-2 / gamma, t_end, record_every,
        lambda a: (a, _hits(us, a, rates)), stop_below,
    )
    return FluidTrajectory(*out, optimum_h=opt.h, optimum_alpha=opt.alpha)


def integrate_primal(
    catalog: Catalog,
    utilities,
    cost: CostFunction,
    capacity: float,
    k,
    state0,
    dt: float | None = None,
    t_end: float = 100.0,
    cache_kind: str = "reset",
    record_every: int = 1,
    stop_below: float | None = None,
) -> FluidTrajectory:
    """t_i' = k_i [U_i'(h_i) - C'(sum h - B)] with h_i = f(t_i); V = W(h*) - W(h).

    ``state0`` is the initial hit-probability vector.  ``alpha`` in the
    trajectory records the marginal cost C'(sum h - B).
    """
    us = UtilitySet.coerce(utilities)
    rates = catalog.rates
    model = HitModel(cache_kind)
    k = _gains(k, catalog.n)
    b_star, opt = solve_soft_capacity(catalog, us, cost, capacity, cache_kind)
    w_star = soft_objective(us, cost, opt.h, capacity, rates)

    def hits(t):
        return np.asarray(model.hit_prob(t, rates), dtype=float)

    def step(t, dt_):
        h = hits(t)
        price = cost.marginal(float(h.sum()) - capacity)
        grad = us.marginal(np.clip(h, H_FLOOR, H_CEIL), rates) - price
        return np.maximum(0.0, t + dt_ * k * grad)

    def lyap(t):
        return max(0.0, w_star - soft_objective(us, cost, hits(t), capacity, rates))

    def observe(t):
        h = hits(t)
        return cost.marginal(float(h.sum()) - capacity), h

    out = _integrate(
        step, lyap, _initial_timers(model, state0, rates), dt or 1e-2 / float(k.max()), t_end,
        record_every, observe, stop_below,
    )
    return FluidTrajectory(*out, optimum_h=opt.h, optimum_alpha=opt.alpha, extra={"capacity_star": b_star})


def integrate_primal_dual(
    catalog: Catalog,
    utilities,
    capacity: float,
    k,
    gamma: float,
    state0,
    alpha0: float,
    dt: float | None = None,
    t_end: float = 100.0,
    cache_kind: str = "reset",
    record_every: int = 1,
    stop_below: float | None = None,
) -> FluidTrajectory:
    """t_i' = k_i [U_i'(h_i) - alpha], alpha' = gamma (sum h - B), both projected at zero."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    us = UtilitySet.coerce(utilities)
    rates = catalog.rates
    model = HitModel(cache_kind)
    k = _gains(k, catalog.n)
    opt = solve_dual_price(catalog, us, capacity, cache_kind)
    n = catalog.n

    def hits(t):
        return np.asarray(model.hit_prob(t, rates), dtype=float)

    def step(x, dt_):
        t, a = x[:n], x[n]
        h = hits(t)
        t_new = np.maximum(0.0, t + dt_ * k * (us.marginal(np.clip(h, H_FLOOR, H_CEIL), rates) - a))
        a_new = max(0.0, a + dt_ * gamma * (float(h.sum()) - capacity))
        return np.append(t_new, a_new)

    def lyap(x):
        return primal_dual_lyapunov(hits(x[:n]), x[n], opt.h, opt.alpha, k, gamma, model, rates)

    x0 = np.append(_initial_timers(model, state0, rates), float(alpha0))
    out = _integrate(
        step, lyap, x0, dt or 1e-2 / max(gamma, float(k.max())), t_end, record_every,
        lambda x: (float(x[n]), hits(x[:n])), stop_below,
    )
    return FluidTrajectory(*out, optimum_h=opt.h, optimum_alpha=opt.alpha)


def gradient_audit(catalog: Catalog, utilities, capacity: float, alpha: float, rel_step: float = 1e-6) -> tuple[float, float]:
    """(analytic dD/dalpha, central finite difference) at ``alpha``."""
    us = UtilitySet.coerce(utilities)
    rates = catalog.rates
    analytic = -(float(_hits(us, alpha, rates).sum()) - capacity)
    eps = rel_step * alpha
    numeric = (dual_objective(us, alpha + eps, capacity, rates) - dual_objective(us, alpha - eps, capacity, rates)) / (2 * eps)
    return analytic, numeric


def natural_gains(
    catalog: Catalog, utilities, capacity: float, cache_kind: str = "reset", price: float | None = None,
    rel_step: float = 1e-6,
):
    """(gamma, k) that put every linearized mode near unit rate around an operating point.

    The operating point is h_i = U_i'^-1(price), by default at the hard-capacity
    price alpha*.  gamma = 1 / S with S = -d(sum h)/d(alpha), and
    k_i = 1 / (g_i(h_i) |U_i''(h_i)|).
    """
    us = UtilitySet.coerce(utilities)
    rates = catalog.rates
    a = solve_dual_price(catalog, us, capacity, cache_kind).alpha if price is None else float(price)
    h_op = _hits(us, a, rates)
    dh = (_hits(us, a * (1 - rel_step), rates) - _hits(us, a * (1 + rel_step), rates)) / (2 * rel_step * a)
    ok = dh > 0
    if not ok.any():
        raise ValueError("every hit probability is clamped at the optimum")
    g = HitModel(cache_kind).sensitivity(h_op, rates)
    k = np.empty(catalog.n)
    k[ok] = dh[ok] / g[ok]
    k[~ok] = k[ok].max()
    return 1.0 / float(dh.sum()), k
