"""Per-point influence measures derived from a forward trace.

The primary measure counts, for each point, how many global-feature columns
that point wins under max-pooling. A point that never survives pooling has
zero influence; the counts over all points sum to the feature width exactly.
An L1 variant (row-wise absolute sum of the feature matrix) serves outlier
removal, where graded rather than winner-take-all scores help.
"""

import numpy as np

from .errors import DegenerateInfluenceError
from .network import ForwardTrace


def argmax_count_influence(trace: ForwardTrace) -> np.ndarray:
    """Unnormalized counts: value[j] = number of feature columns point j wins."""
    n = trace.per_point_features.shape[0]
    counts = np.bincount(trace.argmax_indices, minlength=n)
    return counts.astype(np.float64)


def l1_feature_influence(trace: ForwardTrace) -> np.ndarray:
    """Unnormalized L1 norms of each point's feature row."""
    return np.abs(trace.per_point_features).sum(axis=1)


def normalize_influence(values: np.ndarray) -> np.ndarray:
    """Scale a non-negative influence vector to unit sum.

    Raises DegenerateInfluenceError on an all-zero input; callers that can
    tolerate it fall back to a uniform map.
    """
    v = np.asarray(values, dtype=np.float64)
    if (v < 0).any():
        raise ValueError("influence values must be non-negative")
    total = v.sum()
    if total <= 0.0:
        raise DegenerateInfluenceError("influence map sums to zero")
    return v / total
