"""Per-run measurements: hit counts and the occupancy distribution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..catalog import Catalog


@dataclass
class Metrics:
    catalog: Catalog
    requests: np.ndarray
    hits: np.ndarray
    occupancy_weights: np.ndarray
    occupancy_samples: list[tuple[float, int]] = field(default_factory=list)
    measured_from: float = 0.0
    measured_to: float = 0.0
    warmup_requests: int = 0
    provisioned_size: int | None = None
    provisioned_violations: int = 0
    measured_requests: int = 0

    @property
    def h_empirical(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.requests > 0, self.hits / np.maximum(self.requests, 1), np.nan)

    def binomial_stderr(self, h_model) -> np.ndarray:
        h = np.asarray(h_model, dtype=float)
        return np.sqrt(h * (1.0 - h) / np.maximum(self.requests, 1))

    @property
    def occupancy_pdf(self) -> np.ndarray:
        total = self.occupancy_weights.sum()
        if total <= 0:
            return np.array([1.0])
        return self.occupancy_weights / total

    @property
    def occupancy_ccdf(self) -> np.ndarray:
        """ccdf[k] = P(occupancy >= k)."""
        pdf = self.occupancy_pdf
        return np.cumsum(pdf[::-1])[::-1]

    @property
    def mean_occupancy(self) -> float:
        pdf = self.occupancy_pdf
        return float(np.dot(np.arange(pdf.size), pdf))

    def violation_frequency(self, threshold: float) -> float:
        """Time fraction with occupancy >= threshold."""
        k = max(0, math.ceil(threshold - 1e-9))
        ccdf = self.occupancy_ccdf
        return float(ccdf[k]) if k < ccdf.size else 0.0
