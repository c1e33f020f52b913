"""Entropy, normalized entropy, focus, and focus-distribution statistics.

Focus is one minus the normalized entropy of an influence distribution:
0 means influence is spread perfectly evenly across the points, 1 means a
single point carries everything. Normalizing by ln(N) makes the measure
comparable across cloud sizes. Dataset-level statistics band samples into
under-, in-, and over-focused regions around the mean.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDistributionError

SUM_TOLERANCE = 1e-6

BAND_UNDER = "under"
BAND_IN = "in"
BAND_OVER = "over"


def _as_distribution(p) -> np.ndarray:
    v = np.asarray(p, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise InvalidDistributionError("expected a non-empty 1-D distribution")
    if (v < 0).any():
        raise InvalidDistributionError("distribution has negative entries")
    total = v.sum()
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise InvalidDistributionError(f"distribution sums to {total!r}, not 1")
    return v


def entropy(p) -> float:
    """Shannon entropy -sum(p * ln p), with the 0*ln(0) = 0 convention."""
    v = _as_distribution(p)
    nz = v[v > 0.0]
    return float(-(nz * np.log(nz)).sum())


def normalized_entropy(p, n: int = None) -> float:
    """Entropy divided by its maximum ln(n); in [0, 1]. Requires n >= 2."""
    v = _as_distribution(p)
    if n is None:
        n = v.size
    if n < 2:
        raise ValueError("normalized entropy needs n >= 2")
    # summation round-off can overshoot the exact bound by ~1e-16; clamp so
    # the [0, 1] guarantee is unconditional
    return min(entropy(v) / np.log(n), 1.0)


def focus(p, n: int = None) -> float:
    """1 - normalized entropy: 0 for uniform influence, 1 for one-hot.

    A single-element distribution is maximally concentrated by construction
    and maps to 1.
    """
    v = _as_distribution(p)
    if n is None:
        n = v.size
    if n == 1:
        return 1.0
    return 1.0 - normalized_entropy(v, n)


@dataclass(frozen=True)
class FocusStats:
    """Mean/std of focus over a reference set plus the band multipliers."""

    mu: float
    sigma: float
    alpha: float = 1.0
    beta: float = 1.0

    @property
    def over_edge(self):
        return self.mu + self.alpha * self.sigma

    @property
    def under_edge(self):
        return self.mu - self.beta * self.sigma


def focus_stats(values, alpha: float = 1.0, beta: float = 1.0) -> FocusStats:
    """Empirical mean and population standard deviation of focus values."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("focus statistics need at least 2 values")
    return FocusStats(float(v.mean()), float(v.std()), alpha, beta)


def classify_focus(f: float, stats: FocusStats) -> str:
    """Band a focus value: 'over' at/above mu + alpha*sigma, 'under' at/below
    mu - beta*sigma, 'in' between."""
    if f >= stats.over_edge:
        return BAND_OVER
    if f <= stats.under_edge:
        return BAND_UNDER
    return BAND_IN
