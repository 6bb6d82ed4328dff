from __future__ import annotations

import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utilitycache.cache.hitmodel import HitModel
from utilitycache.catalog import Catalog
from utilitycache.fluid import (
    dual_objective,
    gradient_audit,
    integrate_dual,
    integrate_primal,
    integrate_primal_dual,
    natural_gains,
    primal_dual_lyapunov,
)
from utilitycache.solver import solve_dual_price, solve_soft_capacity
from utilitycache.utility import CostFunction, UtilitySet


def log_set(n):
    return UtilitySet.beta_fair(1.0, np.ones(n))


class TestDual:
    def test_identical_log_utilities(self):
        cat = Catalog.from_rates(np.ones(10))
        tr = integrate_dual(cat, log_set(10), 2.0, gamma=0.5, alpha0=1.0, t_end=200)
        assert tr.final_alpha == pytest.approx(5.0, rel=1e-6)
        assert tr.monotone
        assert tr.reduction < 1e-6

    def test_strict_decrease(self):
        cat = Catalog.from_rates(np.ones(10))
        tr = integrate_dual(cat, log_set(10), 2.0, gamma=0.5, alpha0=1.0, t_end=5)
        assert np.all(np.diff(tr.V) < 0)

    @settings(max_examples=40)
    @given(st.floats(-3, 3).filter(lambda x: abs(x) > 1e-3))
    def test_lyapunov_positive_off_optimum(self, log_ratio):
        cat = Catalog.zipf(20, 0.8)
        us = UtilitySet.lru(cat.rates)
        opt = solve_dual_price(cat, us, 4.0)
        d_star = dual_objective(us, opt.alpha, 4.0, cat.rates)
        assert dual_objective(us, opt.alpha * np.exp(log_ratio), 4.0, cat.rates) > d_star

    def test_zero_at_optimum(self):
        cat = Catalog.zipf(20, 0.8)
        us = UtilitySet.lru(cat.rates)
        opt = solve_dual_price(cat, us, 4.0)
        tr = integrate_dual(cat, us, 4.0, gamma=1.0, alpha0=opt.alpha, t_end=1)
        assert tr.V0 == pytest.approx(0.0, abs=1e-12)
        assert tr.reduction == 0.0

    def test_invalid(self):
        cat = Catalog.from_rates([1.0])
        with pytest.raises(ValueError):
            integrate_dual(cat, log_set(1), 0.5, gamma=0.0, alpha0=1.0)
        with pytest.raises(ValueError):
            integrate_dual(cat, log_set(1), 0.5, gamma=1.0, alpha0=1.0, dt=-1)


@pytest.mark.parametrize("kind", ["lru", "beta2", "fifo"])
def test_gradient_audit(kind, rng):
    rates = rng.uniform(0.1, 2.0, 30)
    cat = Catalog.from_rates(rates)
    us = {"lru": UtilitySet.lru(rates), "fifo": UtilitySet.fifo(rates), "beta2": UtilitySet.beta_fair(2.0, rates)}[kind]
    alpha = solve_dual_price(cat, us, 6.0).alpha * 1.7
    analytic, numeric = gradient_audit(cat, us, 6.0, alpha)
    assert numeric == pytest.approx(analytic, rel=1e-5)


class TestPrimal:
    def test_stationary_at_optimum(self):
        cat = Catalog.zipf(5, 0.8)
        us = log_set(5)
        cost = CostFunction("exponential", 1.0, 1.0)
        _, opt = solve_soft_capacity(cat, us, cost, 1.0)
        tr = integrate_primal(cat, us, cost, 1.0, k=0.7, state0=opt.h, t_end=10)
        np.testing.assert_allclose(tr.final_h, opt.h, rtol=1e-8)

    def test_single_file_matches_offline(self):
        cat = Catalog.from_rates([2.0])
        us = log_set(1)
        cost = CostFunction("exponential", 1.0, 1.0)
        b_star, opt = solve_soft_capacity(cat, us, cost, 0.5)
        tr = integrate_primal(cat, us, cost, 0.5, k=1.0, state0=[0.1], dt=0.05, t_end=200)
        assert tr.final_h[0] == pytest.approx(opt.h[0], rel=1e-6)
        assert tr.extra["capacity_star"] == pytest.approx(b_star)
        assert tr.monotone

    def test_marginal_cost_recorded(self):
        cat = Catalog.from_rates([2.0])
        cost = CostFunction("exponential", 1.0, 1.0)
        tr = integrate_primal(cat, log_set(1), cost, 0.5, k=1.0, state0=[0.3], t_end=1)
        assert tr.alpha[0] == pytest.approx(cost.marginal(0.3 - 0.5))

    @pytest.mark.parametrize("kind", ["reset", "non_reset"])
    def test_sensitivity(self, kind):
        m = HitModel(kind)
        for h in (0.05, 0.4, 0.9):
            t = m.timer_for(h, 2.0)
            eps = 1e-6 * t
            fd = (m.hit_prob(t + eps, 2.0) - m.hit_prob(t - eps, 2.0)) / (2 * eps)
            assert m.sensitivity(h, 2.0) == pytest.approx(fd, rel=1e-6)


class TestPrimalDual:
    def test_lru_example(self):
        cat = Catalog.from_rates([2.0, 1.0])
        us = UtilitySet.lru(cat.rates)
        gamma, k = natural_gains(cat, us, 1.0)
        tr = integrate_primal_dual(cat, us, 1.0, k, gamma, [0.3, 0.3], 1.0, dt=0.05, t_end=200)
        assert tr.final_alpha == pytest.approx(2.07809, rel=1e-5)
        assert tr.monotone and tr.reduction < 1e-6

    def test_stationary_at_optimum(self):
        cat = Catalog.zipf(6, 0.8)
        us = UtilitySet.lru(cat.rates)
        opt = solve_dual_price(cat, us, 2.0)
        tr = integrate_primal_dual(cat, us, 2.0, 0.5, 0.5, opt.h, opt.alpha, t_end=5)
        assert tr.V0 == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(tr.final_h, opt.h, rtol=1e-9)

    @settings(max_examples=50)
    @given(st.lists(st.floats(0.01, 0.95), min_size=3, max_size=3), st.floats(0.0, 10.0))
    def test_lyapunov_nonnegative(self, h, alpha):
        rates = np.array([1.5, 1.0, 0.5])
        cat = Catalog.from_rates(rates)
        us = UtilitySet.lru(rates)
        opt = solve_dual_price(cat, us, 1.0)
        v = primal_dual_lyapunov(h, alpha, opt.h, opt.alpha, np.ones(3), 0.3, HitModel("reset"), rates)
        assert v >= 0.0
        if not np.allclose(h, opt.h) or alpha != opt.alpha:
            assert v > 0.0


def test_trajectory_rows():
    small = integrate_dual(Catalog.from_rates(np.ones(3)), log_set(3), 1.0, 0.5, 1.0, t_end=1, record_every=3)
    assert small.header() == ["time", "alpha", "V", "h_1", "h_2", "h_3"]
    rows = list(small.rows())
    assert len(rows[0]) == 6 and small.h_steps[-1] == len(small.V) - 1
    big = integrate_dual(Catalog.from_rates(np.ones(40)), log_set(40), 4.0, 0.5, 1.0, t_end=1)
    assert big.header()[-1] == "sum_h"
    buf = io.StringIO()
    csv.writer(buf).writerows(big.rows())
    assert len(next(csv.reader(io.StringIO(buf.getvalue())))) == 4
