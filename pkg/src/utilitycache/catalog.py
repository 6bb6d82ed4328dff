"""File populations: explicit rate lists or Zipf-generated catalogs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def zipf_rates(n: int, s: float, aggregate_rate: float = 1.0) -> np.ndarray:
    """Per-file Poisson rates lam_i = Lambda * i^-s / sum_j j^-s."""
    if n < 1:
        raise ValueError("need at least one file")
    p = np.arange(1, n + 1, dtype=float) ** (-s)
    return aggregate_rate * p / p.sum()


@dataclass(frozen=True)
class Catalog:
    rates: np.ndarray
    ids: tuple[int, ...] = ()
    zipf_exponent: float | None = None
    aggregate_rate: float | None = None

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 1 or rates.size == 0:
            raise ValueError("rates must be a nonempty 1-d sequence")
        if np.any(~np.isfinite(rates)) or np.any(rates <= 0):
            raise ValueError("every request rate must be positive and finite")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        ids = tuple(self.ids) if self.ids else tuple(range(1, rates.size + 1))
        if len(ids) != rates.size or len(set(ids)) != len(ids):
            raise ValueError("file ids must be unique, one per rate")
        object.__setattr__(self, "ids", ids)

    @classmethod
    def zipf(cls, n: int, s: float, aggregate_rate: float = 1.0) -> "Catalog":
        return cls(zipf_rates(n, s, aggregate_rate), zipf_exponent=s, aggregate_rate=aggregate_rate)

    @classmethod
    def from_rates(cls, rates: Sequence[float], ids: Sequence[int] = ()) -> "Catalog":
        return cls(np.asarray(rates, dtype=float), tuple(ids))

    @property
    def n(self) -> int:
        return self.rates.size

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    @property
    def probabilities(self) -> np.ndarray:
        return self.rates / self.rates.sum()

    def same_files(self, other: "Catalog", rtol: float = 1e-9) -> bool:
        return self.ids == other.ids and np.allclose(self.rates, other.rates, rtol=rtol, atol=0.0)
