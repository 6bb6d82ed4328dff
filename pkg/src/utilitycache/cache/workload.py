"""Seeded Poisson request streams over a catalog."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from ..catalog import Catalog

CHUNK = 1 << 16


class RequestStream:
    """Aggregate Poisson process of rate Lambda with i.i.d. file marks.

    Thinning an aggregate Poisson stream by p_i = lam_i / Lambda is the same
    as running independent per-file Poisson processes.  Draws happen in
    fixed-size chunks, so a seed determines the whole sequence.
    """

    def __init__(self, catalog: Catalog, seed: int, chunk: int = CHUNK):
        self.catalog = catalog
        self.seed = seed
        self.chunk = chunk
        self.rate = catalog.total_rate
        self._cdf = np.cumsum(catalog.probabilities)
        self._rng = np.random.default_rng(seed)
        self._now = 0.0
        self._buf_t: list[float] = []
        self._buf_f: list[int] = []
        self._pos = 0

    def _draw(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        gaps = self._rng.exponential(1.0 / self.rate, size)
        u = self._rng.random(size)
        files = np.minimum(np.searchsorted(self._cdf, u, side="right"), self.catalog.n - 1)
        times = self._now + np.cumsum(gaps)
        self._now = float(times[-1])
        return times, files

    def chunks(self, count: int) -> Iterator[tuple[list[float], list[int]]]:
        """Yield the next ``count`` requests as (times, file indices) lists."""
        if self._pos < len(self._buf_t):
            raise RuntimeError("cannot mix next_request() and chunks() on one stream")
        left = count
        while left > 0:
            times, files = self._draw(self.chunk)
            take = min(left, self.chunk)
            if take < self.chunk:
                self._buf_t = times[take:].tolist()
                self._buf_f = files[take:].tolist()
                self._pos = 0
            yield times[:take].tolist(), files[:take].tolist()
            left -= take

    def next_request(self) -> tuple[float, int]:
        """(arrival time, file index) of the next request."""
        if self._pos >= len(self._buf_t):
            times, files = self._draw(self.chunk)
            self._buf_t, self._buf_f, self._pos = times.tolist(), files.tolist(), 0
        i = self._pos
        self._pos += 1
        return self._buf_t[i], self._buf_f[i]
