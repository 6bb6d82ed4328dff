from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from utilitycache.cache import (
    CacheState,
    ConfigurationError,
    HitModel,
    Metrics,
    RequestStream,
    run_simulation,
)
from utilitycache.catalog import Catalog
from utilitycache.solver import solve_dual_price, violation_bound
from utilitycache.utility import UtilitySet


class TestHitModel:
    @given(st.floats(1e-3, 1e3), st.floats(0, 1e3))
    def test_inverse(self, lam, t):
        for kind in ("reset", "non_reset"):
            m = HitModel(kind)
            h = m.hit_prob(t, lam)
            if h < 1 - 1e-9:
                assert m.timer_for(h, lam) == pytest.approx(t, rel=1e-7, abs=1e-12)

    def test_boundaries(self):
        for kind in ("reset", "non_reset"):
            m = HitModel(kind)
            assert m.hit_prob(0.0, 2.0) == 0.0
            assert m.hit_prob(1e12, 2.0) == pytest.approx(1.0)
            assert np.all(np.diff(m.hit_prob(np.linspace(0, 10, 100), 0.7)) > 0)
            assert math.isinf(m.timer_for(1.0, 1.0))

    @pytest.mark.parametrize("kind", ["reset", "non_reset"])
    def test_sensitivity_matches_finite_difference(self, kind):
        m = HitModel(kind)
        lam = 1.7
        for h in (0.05, 0.3, 0.7, 0.95):
            t = m.timer_for(h, lam)
            eps = 1e-6 * t
            fd = (m.hit_prob(t + eps, lam) - m.hit_prob(t - eps, lam)) / (2 * eps)
            assert m.sensitivity(h, lam) == pytest.approx(fd, rel=1e-6)
            assert m.dh_dt(t, lam) == pytest.approx(fd, rel=1e-6)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            HitModel("clock")


class TestCacheState:
    def test_cold_start(self):
        s = CacheState("reset")
        assert not s.handle_request(3, 1.0, 5.0)
        assert s.entries[3][0] == 6.0

    def test_non_reset_semantics(self):
        s = CacheState("non_reset")
        assert [s.handle_request(0, t, 10.0) for t in (0.0, 5.0, 11.0)] == [False, True, False]

    def test_reset_semantics(self):
        s = CacheState("reset")
        assert [s.handle_request(0, t, 10.0) for t in (0.0, 5.0, 12.0)] == [False, True, True]
        assert s.entries[0][0] == 22.0

    def test_reset_hit_pushes_expiry(self):
        s = CacheState("reset")
        s.handle_request(0, 0.0, 10.0)
        s.handle_request(0, 5.0, 10.0)
        assert s.occupancy(12.0) == 1
        assert s.occupancy(15.0) == 0

    def test_occupancy(self):
        s = CacheState("reset")
        assert s.occupancy(0.0) == 0
        s.handle_request(1, 0.0, 4.0)
        s.handle_request(2, 0.0, 9.0)
        assert s.occupancy(5.0) == 1
        assert s.remaining(2, 5.0) == 4.0 and s.remaining(1, 5.0) == 0.0

    def test_periodic_renewal(self):
        s = CacheState("reset")
        for k in range(1000):
            s.handle_request(0, 0.5 * k, 1.0)
            assert s.occupancy(0.5 * k + 0.25) == 1

    def test_time_cannot_go_back(self):
        s = CacheState("reset")
        s.advance(2.0)
        with pytest.raises(ValueError):
            s.advance(1.0)

    def test_zero_timer_never_stores(self):
        s = CacheState("non_reset")
        assert not s.handle_request(0, 1.0, 0.0)
        assert len(s) == 0

    def test_probe_reports_elapsed_since_set(self):
        s = CacheState("reset")
        s.handle_request(0, 1.0, 10.0)
        assert s.probe(0, 4.0) == (True, 3.0)
        assert s.probe(1, 4.0) == (False, None)


class TestRequestStream:
    def test_selection_frequencies(self):
        c = Catalog.zipf(3, 0.8)
        st_ = RequestStream(c, 5)
        files = np.concatenate([np.asarray(f) for _, f in st_.chunks(300_000)])
        freq = np.bincount(files, minlength=3) / files.size
        np.testing.assert_allclose(freq, [0.5026, 0.2887, 0.2087], atol=0.003)

    def test_mean_gap(self):
        st_ = RequestStream(Catalog.zipf(10, 0.8, 1.0), 11)
        times = np.concatenate([np.asarray(t) for t, _ in st_.chunks(1_000_000)])
        assert np.all(np.diff(times) > 0)
        assert times[-1] / times.size == pytest.approx(1.0, rel=0.005)

    def test_deterministic_and_consistent(self):
        c = Catalog.zipf(20, 0.8)
        a = [(t, f) for ts, fs in RequestStream(c, 3, chunk=100).chunks(250) for t, f in zip(ts, fs)]
        s = RequestStream(c, 3, chunk=100)
        b = [s.next_request() for _ in range(250)]
        assert a == b


def _audit_factory(rng, count):
    checks = []

    def audit(state, now):
        if rng.random() < count / 20_000:
            checks.append((state.occupancy(now), state.scan_occupancy(now), len(state.entries)))

    return audit, checks


class TestSimulation:
    def test_single_file_reset(self):
        c = Catalog.from_rates([1.0])
        r = run_simulation(c, "reset", 1_000_000, 1, timers=[math.log(2)], warmup_fraction=0.0)
        assert r.metrics.h_empirical[0] == pytest.approx(0.5, abs=0.005)

    def test_two_files_lru_timers(self):
        c = Catalog.from_rates([2.0, 1.0])
        alloc = solve_dual_price(c, UtilitySet.lru(c.rates), 1.0)
        r = run_simulation(c, "reset", 400_000, 2, timers=alloc.t)
        T = math.log((1 + math.sqrt(5)) / 2)
        model = np.array([1 - math.exp(-2 * T), 1 - math.exp(-T)])
        se = r.metrics.binomial_stderr(model)
        assert np.all(np.abs(r.metrics.h_empirical - model) < 3 * se)

    def test_zero_timers(self):
        c = Catalog.zipf(10, 0.8)
        r = run_simulation(c, "reset", 10_000, 3, timers=np.zeros(10))
        assert r.metrics.hits.sum() == 0
        assert r.metrics.mean_occupancy == 0.0

    def test_configuration_errors(self):
        c = Catalog.zipf(3, 0.8)
        with pytest.raises(ConfigurationError):
            run_simulation(c, "reset", 10, 1)
        with pytest.raises(ConfigurationError):
            run_simulation(c, "reset", 10, 1, timers=[1, 1, 1], controller=object())
        with pytest.raises(ConfigurationError):
            run_simulation(c, "reset", 0, 1, timers=[1, 1, 1])
        with pytest.raises(ConfigurationError):
            run_simulation(c, "reset", 10, 1, timers=[1, 1])

    @pytest.mark.parametrize("kind", ["reset", "non_reset"])
    def test_pasta_and_occupancy(self, kind, rng):
        c = Catalog.zipf(100, 0.8)
        us = UtilitySet.lru(c.rates) if kind == "reset" else UtilitySet.fifo(c.rates)
        alloc = solve_dual_price(c, us, 10.0, kind)
        audit, checks = _audit_factory(rng, 100)
        r = run_simulation(c, kind, 400_000, 7, timers=alloc.t, audit=audit)
        m = r.metrics
        ok = m.requests >= 1000
        se = m.binomial_stderr(alloc.h)
        assert np.all(np.abs(m.h_empirical - alloc.h)[ok] < 3 * se[ok] + 1e-12)
        # heap bookkeeping vs brute-force scan at random instants
        assert len(checks) >= 50
        assert all(a == b == n for a, b, n in checks)
        spread = math.sqrt(np.sum(alloc.h * (1 - alloc.h)))
        assert abs(m.mean_occupancy - 10.0) < 3 * spread

    def test_chernoff_consistency(self):
        c = Catalog.zipf(500, 0.8)
        alloc = solve_dual_price(c, UtilitySet.lru(c.rates), 50.0)
        m = run_simulation(c, "reset", 300_000, 9, timers=alloc.t).metrics
        for eps in (0.05, 0.1, 0.2):
            assert m.violation_frequency(50 * (1 + eps)) <= violation_bound(50, eps)

    def test_metrics_invariants(self):
        c = Catalog.zipf(50, 0.8)
        r = run_simulation(c, "reset", 50_000, 4, timers=np.full(50, 20.0), provisioned_size=12)
        m = r.metrics
        assert np.all(m.hits <= m.requests)
        h = m.h_empirical[m.requests > 0]
        assert np.all((h >= 0) & (h <= 1))
        assert m.occupancy_pdf.sum() == pytest.approx(1.0)
        assert m.occupancy_ccdf[0] == pytest.approx(1.0)
        assert np.all(np.diff(m.occupancy_ccdf) <= 1e-15)
        assert m.provisioned_violations > 0
        assert m.violation_frequency(0) == pytest.approx(1.0)
        assert m.violation_frequency(1e9) == 0.0

    def test_reproducible(self):
        c = Catalog.zipf(30, 0.8)
        a = run_simulation(c, "reset", 20_000, 5, timers=np.full(30, 10.0)).metrics
        b = run_simulation(c, "reset", 20_000, 5, timers=np.full(30, 10.0)).metrics
        np.testing.assert_array_equal(a.hits, b.hits)
        np.testing.assert_array_equal(a.occupancy_weights, b.occupancy_weights)

    def test_infinite_timers_keep_files(self):
        c = Catalog.from_rates([1.0, 1.0])
        m = run_simulation(c, "non_reset", 1000, 1, timers=[math.inf, 0.0], warmup_fraction=0.5).metrics
        assert m.h_empirical[0] == 1.0 and m.h_empirical[1] == 0.0


def test_metrics_empty_histogram():
    m = Metrics(catalog=Catalog.from_rates([1.0]), requests=np.zeros(1, int), hits=np.zeros(1, int),
                occupancy_weights=np.array([0.0]))
    assert m.occupancy_pdf.tolist() == [1.0]
    assert math.isnan(m.h_empirical[0])
