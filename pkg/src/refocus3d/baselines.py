"""Filtering baselines and the influence-based outlier remover.

SRS drops a uniformly random fraction of points; SOR drops points whose mean
distance to their k nearest neighbors is more than ``sigma_mult`` standard
deviations above the dataset mean. The influence-based remover keeps points
whose L1 feature influence is at or below the per-cloud average. All three
return subsets in original point order.
"""

import numpy as np

from .geometry import PointCloud, pairwise_sq_distances
from .influence import l1_feature_influence
from .network import EncoderParams, forward

SOR_DEFAULT_K = 2
SOR_DEFAULT_SIGMA = 1.1


def srs(cloud: PointCloud, drop_fraction: float, seed: int) -> PointCloud:
    """Keep N - floor(drop_fraction * N) uniformly random points."""
    if not 0.0 <= drop_fraction < 1.0:
        raise ValueError("drop_fraction must be in [0, 1)")
    n = len(cloud)
    n_keep = n - int(np.floor(drop_fraction * n))
    rng = np.random.Generator(np.random.PCG64(seed))
    keep = np.sort(rng.choice(n, size=n_keep, replace=False))
    return cloud.take(keep)


def neighbor_distance_scores(cloud: PointCloud, k: int) -> np.ndarray:
    """Each point's mean Euclidean distance to its k nearest neighbors."""
    n = len(cloud)
    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, N-1]; got k={k}, N={n}")
    d2 = pairwise_sq_distances(cloud.points)
    np.fill_diagonal(d2, np.inf)
    nearest = np.partition(d2, k - 1, axis=1)[:, :k]
    return np.sqrt(nearest).mean(axis=1)


def sor_removed_indices(cloud: PointCloud, k: int = SOR_DEFAULT_K,
                        sigma_mult: float = SOR_DEFAULT_SIGMA) -> np.ndarray:
    """Indices SOR removes: score strictly above mean + sigma_mult * std.

    The strict inequality means perfectly regular clouds (zero spread) are
    left untouched.
    """
    scores = neighbor_distance_scores(cloud, k)
    threshold = scores.mean() + sigma_mult * scores.std()
    return np.flatnonzero(scores > threshold)


def sor(cloud: PointCloud, k: int = SOR_DEFAULT_K,
        sigma_mult: float = SOR_DEFAULT_SIGMA) -> PointCloud:
    """Statistical outlier removal; order-preserving subset of the input."""
    removed = sor_removed_indices(cloud, k, sigma_mult)
    keep = np.setdiff1d(np.arange(len(cloud)), removed, assume_unique=True)
    return cloud.take(keep)


def influence_outlier_removal(params: EncoderParams, cloud: PointCloud):
    """Keep points whose L1 feature influence is <= the cloud's mean influence.

    Returns (kept cloud, removed indices). A constant influence map removes
    nothing.
    """
    trace = forward(params, cloud)
    values = l1_feature_influence(trace)
    keep_mask = values <= values.mean()
    removed = np.flatnonzero(~keep_mask)
    return cloud.take(np.flatnonzero(keep_mask)), removed


def precision_recall(removed_indices, flags) -> tuple:
    """Removal quality against inserted-outlier ground truth.

    precision = |removed & flagged| / |removed| (1.0 when nothing removed);
    recall = |removed & flagged| / |flagged| (1.0 when nothing was flagged).
    """
    removed = np.asarray(removed_indices, dtype=np.intp)
    flags = np.asarray(flags, dtype=bool)
    n_removed = removed.size
    n_flagged = int(flags.sum())
    hits = int(flags[removed].sum()) if n_removed else 0
    precision = hits / n_removed if n_removed else 1.0
    recall = hits / n_flagged if n_flagged else 1.0
    return precision, recall
