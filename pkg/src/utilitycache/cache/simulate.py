"""Event loop replaying a Poisson request stream through a TTL cache."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..catalog import Catalog
from .metrics import Metrics
from .state import CacheState, OccupancyTracker
from .workload import RequestStream


class ConfigurationError(ValueError):
    pass


class Controller(Protocol):
    alpha: float

    def on_request(self, i: int, now: float, hit: bool, gap: float | None, b_curr: int) -> float:
        """Update internal state for one request and return the serving timer of file ``i``."""
        ...


@dataclass
class SimulationResult:
    metrics: Metrics
    trajectory: list[tuple[int, float, float, int]] = field(default_factory=list)
    alpha_tail_mean: float = math.nan
    final_time: float = 0.0


def run_simulation(
    catalog: Catalog,
    cache_kind: str,
    horizon: int,
    seed: int,
    *,
    timers: Sequence[float] | None = None,
    controller: Controller | None = None,
    warmup_fraction: float = 0.1,
    occupancy_every: int = 1000,
    trajectory_every: int = 1000,
    provisioned_size: int | None = None,
    audit=None,
) -> SimulationResult:
    """Serve ``horizon`` requests; exactly one of ``timers`` / ``controller`` is used.

    A controller sees each request before the serving timer is chosen,
    together with the time since the file's previous request; B_curr is the
    occupancy just before admission.  Metrics skip the first
    ``warmup_fraction`` of requests.  ``audit(state, now)`` is called once per
    request when given (tests use it to cross-check the heap).
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be at least one request")
    if (timers is None) == (controller is None):
        raise ConfigurationError("supply exactly one of fixed timers or a controller")
    if not 0.0 <= warmup_fraction < 1.0:
        raise ConfigurationError("warmup_fraction must be in [0, 1)")
    n = catalog.n
    if timers is not None:
        fixed = [float(t) for t in timers]
        if len(fixed) != n or any(t < 0 or math.isnan(t) for t in fixed):
            raise ConfigurationError("need one nonnegative timer per file")
    warm = int(warmup_fraction * horizon)
    tail_start = horizon - horizon // 4

    tracker = OccupancyTracker()
    state = CacheState(cache_kind, tracker)
    stream = RequestStream(catalog, seed)
    requests = [0] * n
    hits = [0] * n
    samples: list[tuple[float, int]] = []
    trajectory: list[tuple[int, float, float, int]] = []
    alpha_sum = 0.0
    over = 0
    prov = provisioned_size if provisioned_size is not None else math.inf

    last_seen = [-1.0] * n
    probe, admit, advance = state.probe, state.admit, state.advance
    entries = state.entries
    k = 0
    now = 0.0
    for times, files in stream.chunks(horizon):
        for now, i in zip(times, files):
            advance(now)
            b_curr = len(entries)
            if k == warm:
                tracker.activate(now)
            hit, _ = probe(i, now)
            if controller is None:
                t = fixed[i]
            else:
                prev = last_seen[i]
                t = controller.on_request(i, now, hit, now - prev if prev >= 0.0 else None, b_curr)
                last_seen[i] = now
                if k >= tail_start:
                    alpha_sum += controller.alpha
                if k % trajectory_every == 0:
                    trajectory.append((k, now, controller.alpha, b_curr))
            admit(i, now, t, hit)
            if k >= warm:
                requests[i] += 1
                if hit:
                    hits[i] += 1
                if b_curr > prov:
                    over += 1
                if (k - warm) % occupancy_every == 0:
                    samples.append((now, b_curr))
            if audit is not None:
                audit(state, now)
            k += 1
    tracker.close(now)

    metrics = Metrics(
        catalog=catalog,
        requests=np.array(requests, dtype=np.int64),
        hits=np.array(hits, dtype=np.int64),
        occupancy_weights=np.array(tracker.weights if tracker.weights else [0.0]),
        occupancy_samples=samples,
        measured_from=tracker.start_time,
        measured_to=now,
        warmup_requests=warm,
        provisioned_size=provisioned_size,
        provisioned_violations=over,
        measured_requests=horizon - warm,
    )
    tail = horizon - tail_start
    return SimulationResult(
        metrics=metrics,
        trajectory=trajectory,
        alpha_tail_mean=alpha_sum / tail if controller is not None and tail > 0 else math.nan,
        final_time=now,
    )
