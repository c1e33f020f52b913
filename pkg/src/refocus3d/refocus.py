"""Refocused inference and training: discard the most influential points.

Inference runs two passes: the first queries the influence map and the focus
value f, the cloud is cropped to its K = floor((1-f)*N) least influential
points, and the second pass classifies the crop. Samples whose influence is
concentrated (outlier-driven over-focus) get aggressive filtering; evenly
influenced samples pass through almost untouched. A feature-space variant
masks the most influential points out of the max-pool instead, costing no
second pass.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInfluenceError
from .focus import focus
from .geometry import PointCloud
from .influence import argmax_count_influence, normalize_influence
from .network import EncoderParams, ForwardTrace, forward, head_logits, softmax

VARIANT_EUCLIDEAN = "euclidean"
VARIANT_FEATURE = "feature_space"

TRAIN_CROP_MIN = 256
TRAIN_CROP_MAX = 1024


@dataclass(frozen=True)
class RefocusConfig:
    k_min: int = 16
    variant: str = VARIANT_EUCLIDEAN
    fixed_k: int = None  # disables the adaptive rule when set

    def __post_init__(self):
        if self.k_min < 1:
            raise ValueError("k_min must be >= 1")
        if self.variant not in (VARIANT_EUCLIDEAN, VARIANT_FEATURE):
            raise ValueError(f"unknown refocus variant {self.variant!r}")
        if self.fixed_k is not None and self.fixed_k < self.k_min:
            raise ValueError("fixed_k must be >= k_min")


@dataclass(frozen=True)
class RefocusResult:
    label: int
    probabilities: np.ndarray
    focus_before: float  # from the full input, drives the threshold
    focus_after: float  # recomputed on the retained subset (diagnostic)
    k: int
    retained_indices: np.ndarray
    uniform_fallback: bool = False  # degenerate influence replaced by uniform
    filter_fallback: bool = False  # feature filter would have masked everything


def adaptive_k(f: float, n: int, k_min: int = 16) -> int:
    """Points to retain: floor((1-f)*n), clamped into [k_min, n]."""
    k = int(np.floor((1.0 - f) * n))
    return max(min(k_min, n), min(k, n))


def lowest_influence_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest influence values, ties to the lower index,
    returned in original point order."""
    v = np.asarray(values)
    if not 0 <= k <= v.size:
        raise ValueError(f"k must be in [0, N]; got k={k}, N={v.size}")
    picked = np.argsort(v, kind="stable")[:k]
    return np.sort(picked)


def select_lowest(cloud: PointCloud, values: np.ndarray, k: int) -> PointCloud:
    """The k least influential points, original relative order preserved."""
    if len(values) != len(cloud):
        raise ValueError("influence length must match cloud size")
    return cloud.take(lowest_influence_indices(values, k))


def _normalized_or_uniform(raw: np.ndarray):
    try:
        return normalize_influence(raw), False
    except DegenerateInfluenceError:
        return np.full(raw.shape[0], 1.0 / raw.shape[0]), True


def _trace_focus(trace: ForwardTrace):
    infl, fallback = _normalized_or_uniform(argmax_count_influence(trace))
    return infl, focus(infl), fallback


def refocus_infer(params: EncoderParams, cloud: PointCloud,
                  config: RefocusConfig = RefocusConfig()) -> RefocusResult:
    """Dual-pass refocused classification (single round, deterministic)."""
    trace = forward(params, cloud)
    infl, f_before, fallback = _trace_focus(trace)
    n = len(cloud)
    if config.variant == VARIANT_FEATURE:
        return _feature_variant(params, trace, infl, f_before, fallback, config)
    if config.fixed_k is not None:
        k = min(config.fixed_k, n)
    else:
        k = adaptive_k(f_before, n, config.k_min)
    retained = lowest_influence_indices(infl, k)
    second = forward(params, cloud.take(retained))
    _, f_after, _ = _trace_focus(second)
    probs = softmax(second.logits)
    return RefocusResult(int(np.argmax(probs)), probs, f_before, f_after, k,
                         retained, uniform_fallback=fallback)


def feature_space_filter(trace: ForwardTrace, f: float):
    """Max-pool again with the ceil(f*N) most influential points masked out.

    Returns (masked global feature, kept row indices, fallback flag). If the
    exclusion would cover every point the original feature is returned and
    the flag is set.
    """
    n = trace.per_point_features.shape[0]
    n_excluded = int(np.ceil(f * n))
    if n_excluded >= n:
        return trace.global_feature, np.arange(n), True
    if n_excluded == 0:
        return trace.global_feature, np.arange(n), False
    infl, _ = _normalized_or_uniform(argmax_count_influence(trace))
    kept = lowest_influence_indices(infl, n - n_excluded)
    masked = trace.per_point_features[kept].max(axis=0)
    return masked, kept, False


def _feature_variant(params, trace, infl, f_before, uniform_fallback, config):
    masked, kept, filter_fallback = feature_space_filter(trace, f_before)
    logits = head_logits(params, masked)
    probs = softmax(logits)
    sub = trace.per_point_features[kept]
    sub_amax = np.argmax(sub, axis=0)
    sub_counts = np.bincount(sub_amax, minlength=kept.size).astype(np.float64)
    sub_infl, _ = _normalized_or_uniform(sub_counts)
    return RefocusResult(int(np.argmax(probs)), probs, f_before, focus(sub_infl),
                         kept.size, kept, uniform_fallback=uniform_fallback,
                         filter_fallback=filter_fallback)


def refocus_train_sampler(params: EncoderParams, cloud: PointCloud, rng,
                          crop_min: int = TRAIN_CROP_MIN,
                          crop_max: int = TRAIN_CROP_MAX) -> PointCloud:
    """Training-time crop: keep a uniform-random number in [crop_min,
    min(crop_max, N)] of the currently least influential points.

    Clouds smaller than crop_min pass through unchanged. Plug into
    ``network.train`` as the sampler hook.
    """
    n = len(cloud)
    if n < crop_min:
        return cloud
    trace = forward(params, cloud)
    infl, _ = _normalized_or_uniform(argmax_count_influence(trace))
    k = int(rng.integers(crop_min, min(crop_max, n) + 1))
    return select_lowest(cloud, infl, k)
