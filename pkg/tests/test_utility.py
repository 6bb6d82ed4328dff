from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from utilitycache.utility import (
    H_CEIL,
    H_FLOOR,
    CostFunction,
    UnsupportedUtilityError,
    UtilityDomainError,
    UtilityFunction,
    UtilitySet,
    cost,
    cost_marginal,
    li,
)

probs = st.floats(min_value=1e-6, max_value=1 - 1e-6)
rates = st.floats(min_value=1e-3, max_value=1e3)
weights = st.floats(min_value=1e-3, max_value=1e3)
betas = st.floats(min_value=0.1, max_value=8.0)


def any_utility(kind, w, beta, lam):
    if kind == "beta_fair":
        return UtilityFunction.beta_fair(beta, w)
    if kind == "rate_weighted":
        return UtilityFunction.rate_weighted_beta_fair(beta, lam, w)
    if kind == "fifo":
        return UtilityFunction.fifo(lam)
    return UtilityFunction.lru(lam)


utilities = st.builds(
    any_utility, st.sampled_from(["beta_fair", "rate_weighted", "fifo", "lru"]), weights, betas, rates
)


class TestValue:
    def test_log_utility(self):
        assert UtilityFunction.beta_fair(1.0, 2.0).value(0.5) == pytest.approx(-1.38629, abs=1e-5)

    def test_fifo_equiv(self):
        assert UtilityFunction.fifo(1.0).value(0.5) == pytest.approx(-1.19315, abs=1e-5)

    def test_lru_equiv_matches_li_oracle(self):
        assert UtilityFunction.lru(1.0).value(0.5) == pytest.approx(float(mpmath.li(0.5)), rel=1e-12)

    def test_h_equal_one_allowed_only_where_finite(self):
        assert UtilityFunction.fifo(1.0).value(1.0) == pytest.approx(-1.0)
        assert UtilityFunction.beta_fair(0.5, 1.0).value(1.0) == pytest.approx(2.0)
        with pytest.raises(UtilityDomainError):
            UtilityFunction.lru(1.0).value(1.0)
        with pytest.raises(UtilityDomainError):
            UtilityFunction.beta_fair(1.0).value(0.0)

    def test_special_cases_unsupported(self):
        for beta in (0.0, math.inf):
            u = UtilityFunction.beta_fair(beta, 1.0)
            assert not u.strictly_concave
            with pytest.raises(UnsupportedUtilityError):
                u.value(0.5)
            with pytest.raises(UnsupportedUtilityError):
                u.marginal(0.5)
            with pytest.raises(UnsupportedUtilityError):
                u.inverse_marginal(1.0)


class TestMarginal:
    def test_examples(self):
        assert UtilityFunction.beta_fair(2.0, 4.0).marginal(0.5) == pytest.approx(16.0)
        assert UtilityFunction.fifo(2.0).marginal(0.5) == pytest.approx(2.0)
        assert UtilityFunction.lru(1.0).marginal(1 - math.exp(-1)) == pytest.approx(1.0)

    def test_domain(self):
        for h in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(UtilityDomainError):
                UtilityFunction.fifo(1.0).marginal(h)

    @given(utilities, st.floats(min_value=1e-3, max_value=1 - 1e-3))
    def test_matches_finite_difference(self, u, h):
        eps = 1e-6 * min(h, 1 - h)
        fd = (u.value(h + eps) - u.value(h - eps)) / (2 * eps)
        assert fd == pytest.approx(u.marginal(h), rel=1e-5)

    @given(utilities, probs, probs)
    def test_strictly_decreasing(self, u, a, b):
        if a == b:
            return
        lo, hi = min(a, b), max(a, b)
        assert u.marginal(lo) > u.marginal(hi)


class TestInverseMarginal:
    def test_examples(self):
        assert UtilityFunction.beta_fair(1.0, 3.0).inverse_marginal(6.0) == pytest.approx(0.5)
        assert UtilityFunction.fifo(1.0).inverse_marginal(1.0) == pytest.approx(0.5)
        assert UtilityFunction.lru(2.0).inverse_marginal(2.0) == pytest.approx(1 - math.exp(-1), abs=1e-6)

    def test_rejects_nonpositive_price(self):
        with pytest.raises(UtilityDomainError):
            UtilityFunction.fifo(1.0).inverse_marginal(0.0)

    def test_clamped(self):
        assert UtilityFunction.beta_fair(1.0, 1.0).inverse_marginal(1e-20) == H_CEIL
        assert UtilityFunction.beta_fair(1.0, 1.0).inverse_marginal(1e20) == H_FLOOR

    @given(utilities, st.floats(min_value=1e-4, max_value=1 - 1e-4))
    def test_round_trip(self, u, h):
        assert abs(u.inverse_marginal(u.marginal(h)) - h) < 1e-9

    @given(utilities, st.floats(min_value=0.01, max_value=0.99), st.floats(min_value=0.1, max_value=100))
    def test_affine_invariance(self, u, h, a):
        # U -> aU scales U' by a, so U'^-1 at the scaled price gives the same h
        scaled = UtilityFunction(u.kind, u.weight * a, u.beta, u.rate, u.rate_weighted)
        alpha = u.marginal(h)
        assert scaled.inverse_marginal(a * alpha) == pytest.approx(u.inverse_marginal(alpha), rel=1e-9)

    def test_rate_override(self):
        u = UtilityFunction.lru(1.0)
        assert u.inverse_marginal(1.0, rate=2.0) == pytest.approx(1 - math.exp(-2))


class TestTimer:
    def test_lru_reset_timer_is_inverse_price(self):
        u = UtilityFunction.lru(0.3)
        for alpha in (1e-4, 0.01, 0.3, 10.0):
            assert u.timer(alpha, "reset", rate=17.0) == pytest.approx(1 / alpha)

    def test_fifo_non_reset_timer_is_inverse_price(self):
        u = UtilityFunction.fifo(0.3)
        assert u.timer(0.02, "non_reset", rate=5.0) == pytest.approx(50.0)

    def test_beta_fair_timer_follows_hit_model(self):
        u = UtilityFunction.beta_fair(1.0, 1.0)
        assert u.timer(2.0, "reset", rate=1.0) == pytest.approx(math.log(2))
        assert u.timer(2.0, "non_reset", rate=1.0) == pytest.approx(1.0)


class TestLi:
    def test_examples(self):
        assert li(0.0) == 0.0
        assert li(0.5) == pytest.approx(-0.378671, abs=1e-6)
        assert li(0.9) < li(0.5) < 0

    @pytest.mark.parametrize("x", [1e-12, 1e-6, 0.01, 0.2, 0.5, 0.75, 0.9, 0.99, 1 - 1e-9])
    def test_against_high_precision(self, x):
        mpmath.mp.dps = 40
        assert li(x) == pytest.approx(float(mpmath.li(x)), rel=1e-12, abs=1e-15)

    def test_domain(self):
        for x in (1.0, 1.5, -0.1):
            with pytest.raises(UtilityDomainError):
                li(x)


class TestUtilitySet:
    @given(st.lists(st.tuples(utilities, probs), min_size=1, max_size=8))
    def test_vector_forms_match_scalar(self, pairs):
        us = UtilitySet([u for u, _ in pairs])
        h = np.array([x for _, x in pairs])
        np.testing.assert_allclose(us.marginal(h), [u.marginal(x) for u, x in pairs], rtol=1e-12)
        np.testing.assert_allclose(us.value(h), [u.value(x) for u, x in pairs], rtol=1e-12, atol=1e-300)
        for alpha in (1e-3, 1.0, 50.0):
            np.testing.assert_allclose(us.inverse_marginal(alpha), [u.inverse_marginal(alpha) for u, _ in pairs])
            for kind in ("reset", "non_reset"):
                lam = np.array([u.rate or 1.0 for u, _ in pairs])
                # h / (1 - h) amplifies last-bit differences in h near the upper clamp
                np.testing.assert_allclose(
                    us.timers(alpha, kind, lam),
                    [u.timer(alpha, kind, r) for (u, _), r in zip(pairs, lam)],
                    rtol=1e-9,
                )

    def test_missing_rate(self):
        us = UtilitySet([UtilityFunction(kind="lru_equiv")])
        with pytest.raises(ValueError):
            us.inverse_marginal(1.0)


class TestCost:
    def test_examples(self):
        ramp = CostFunction("quadratic_ramp", 1.0, 1.0)
        assert cost(ramp, -5.0) == 0.0 and cost_marginal(ramp, -5.0) == 0.0
        ex = CostFunction("exponential", 1.0, 1.0)
        assert cost(ex, 0.0) == pytest.approx(1.0) and cost_marginal(ex, 0.0) == pytest.approx(1.0)
        assert cost_marginal(CostFunction("exponential", 2.0, 1.0), math.log(3)) == pytest.approx(6.0)

    @given(
        st.sampled_from(["exponential", "quadratic_ramp"]),
        st.floats(0.1, 10),
        st.floats(0.1, 3),
        st.floats(-5, 5),
    )
    def test_marginal_matches_finite_difference(self, kind, c, a, x):
        f = CostFunction(kind, c, a)
        if kind == "quadratic_ramp" and abs(x) < 1e-3:
            return
        eps = 1e-6
        fd = (f.cost(x + eps) - f.cost(x - eps)) / (2 * eps)
        assert fd == pytest.approx(f.marginal(x), rel=1e-5, abs=1e-7)

    @given(st.floats(0.1, 10), st.floats(0.1, 3), st.floats(-5, 5), st.floats(-5, 5))
    def test_convex_nondecreasing(self, c, a, x, y):
        for kind in ("exponential", "quadratic_ramp"):
            f = CostFunction(kind, c, a)
            lo, hi = min(x, y), max(x, y)
            assert f.marginal(lo) <= f.marginal(hi)
            assert f.marginal(lo) >= 0
            mid = 0.5 * (x + y)
            assert f.cost(mid) <= 0.5 * (f.cost(x) + f.cost(y)) + 1e-12 * (1 + abs(f.cost(x)) + abs(f.cost(y)))

    def test_exponential_inverse(self):
        f = CostFunction("exponential", 2.0, 0.5)
        assert f.marginal(f.inverse_marginal(7.0)) == pytest.approx(7.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            CostFunction("cubic")
        with pytest.raises(ValueError):
            CostFunction("exponential", -1.0)
