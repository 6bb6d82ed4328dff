"""Exact TTL cache state with an expiry heap."""
from __future__ import annotations

import heapq
import math

from .hitmodel import CACHE_KINDS


class OccupancyTracker:
    """Time-weighted occupancy histogram, fed every time occupancy changes."""

    def __init__(self):
        self.weights: list[float] = []
        self.active = False
        self._t = 0.0
        self._occ = 0
        self.start_time = 0.0
        self.end_time = 0.0

    def activate(self, now: float):
        self.active = True
        self._t = now
        self.start_time = now

    def change(self, now: float, occ: int):
        if self.active:
            prev = self._occ
            w = self.weights
            if prev >= len(w):
                w.extend([0.0] * (prev + 1 - len(w)))
            w[prev] += now - self._t
        self._t = now
        self._occ = occ

    def close(self, now: float):
        self.change(now, self._occ)
        self.end_time = now


class CacheState:
    """Entries keyed by file index; each holds (expiry, time the timer was last set).

    An entry is live while ``expiry > clock``.  Reset hits push a fresh heap
    record and leave the old one behind; stale records are skipped when
    popped because their expiry no longer matches the entry.
    """

    def __init__(self, cache_kind: str = "reset", tracker: OccupancyTracker | None = None):
        if cache_kind not in CACHE_KINDS:
            raise ValueError(f"cache_kind must be one of {CACHE_KINDS}")
        self.cache_kind = cache_kind
        self.reset = cache_kind == "reset"
        self.entries: dict[int, tuple[float, float]] = {}
        self._heap: list[tuple[float, int]] = []
        self.clock = 0.0
        self.tracker = tracker

    def __len__(self):
        return len(self.entries)

    def __contains__(self, file_id):
        return file_id in self.entries

    def advance(self, now: float):
        """Move the clock to ``now``, evicting everything with expiry <= now."""
        if now < self.clock:
            raise ValueError(f"time went backwards: {now} < {self.clock}")
        heap, entries, tracker = self._heap, self.entries, self.tracker
        while heap and heap[0][0] <= now:
            exp, f = heapq.heappop(heap)
            entry = entries.get(f)
            if entry is not None and entry[0] == exp:
                del entries[f]
                if tracker is not None:
                    tracker.change(exp, len(entries))
        self.clock = now

    def occupancy(self, now: float | None = None) -> int:
        if now is not None:
            self.advance(now)
        return len(self.entries)

    def scan_occupancy(self, now: float) -> int:
        """Occupancy by brute-force scan; an audit for the heap bookkeeping."""
        return sum(1 for exp, _ in self.entries.values() if exp > now)

    def remaining(self, file_id: int, now: float) -> float:
        entry = self.entries.get(file_id)
        if entry is None or entry[0] <= now:
            return 0.0
        return entry[0] - now

    def probe(self, file_id: int, now: float) -> tuple[bool, float | None]:
        """(hit, time since the file's timer was last set) without modifying state.

        The elapsed time equals t - r, the timer minus its remaining TTL.
        """
        self.advance(now)
        entry = self.entries.get(file_id)
        if entry is None:
            return False, None
        return True, now - entry[1]

    def admit(self, file_id: int, now: float, timer: float, hit: bool):
        """Apply the TTL rule after a probe at ``now`` with serving timer ``timer``."""
        if hit:
            if self.reset:
                exp = now + timer
                if exp <= now:
                    del self.entries[file_id]
                    if self.tracker is not None:
                        self.tracker.change(now, len(self.entries))
                    return
                self.entries[file_id] = (exp, now)
                if exp < math.inf:
                    heapq.heappush(self._heap, (exp, file_id))
            return
        if timer <= 0.0:
            return
        exp = now + timer
        self.entries[file_id] = (exp, now)
        if exp < math.inf:
            heapq.heappush(self._heap, (exp, file_id))
        if self.tracker is not None:
            self.tracker.change(now, len(self.entries))

    def handle_request(self, file_id: int, now: float, timer: float) -> bool:
        hit, _ = self.probe(file_id, now)
        self.admit(file_id, now, timer, hit)
        return hit
