"""Seven corruption families at five severity levels.

The families split into outlier-adding (add_global, add_local), point-dropping
(drop_global, drop_local), and smooth (jitter, scale, rotate) categories.
Severity schedules are parameterized so they can be matched to an external
benchmark; the defaults below are used throughout. Corrupted clouds are not
re-normalized, so inserted outliers stay outside the shape envelope.
"""

from dataclasses import dataclass, replace

import numpy as np

from .geometry import Dataset, LabeledCloud, PointCloud, rotation_about_axis

FAMILIES = (
    "jitter",
    "scale",
    "rotate",
    "add_global",
    "add_local",
    "drop_global",
    "drop_local",
)

SEVERITIES = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class Schedule:
    """Per-severity-unit corruption magnitudes."""

    jitter_sigma: float = 0.01  # Gaussian sigma per coordinate, times severity
    scale_span: float = 0.1  # per-axis factor in [1/(1+v*s), 1+v*s]
    rotate_angle: float = np.pi / 10.0  # max |angle| per severity unit
    add_points: int = 10  # points appended per severity unit
    add_local_sigma: float = 0.05  # Gaussian radius around each anchor
    drop_fraction: float = 0.15  # fraction of N dropped per severity unit

    def as_dict(self):
        return {
            "jitter_sigma": self.jitter_sigma,
            "scale_span": self.scale_span,
            "rotate_angle": self.rotate_angle,
            "add_points": self.add_points,
            "add_local_sigma": self.add_local_sigma,
            "drop_fraction": self.drop_fraction,
        }


DEFAULT_SCHEDULE = Schedule()


@dataclass(frozen=True)
class CorruptionSpec:
    family: str
    severity: int
    seed: int
    schedule: Schedule = DEFAULT_SCHEDULE

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown corruption family {self.family!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"severity must be in [1, 5], got {self.severity}")


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _unit_ball(n, rng):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * rng.uniform(size=(n, 1)) ** (1.0 / 3.0)


def _jitter(pts, s, sched, rng):
    return pts + rng.normal(scale=sched.jitter_sigma * s, size=pts.shape)


def _scale(pts, s, sched, rng):
    hi = 1.0 + sched.scale_span * s
    return pts * rng.uniform(1.0 / hi, hi, size=3)


def _rotate(pts, s, sched, rng):
    axis = rng.standard_normal(3)
    angle = rng.uniform(-sched.rotate_angle * s, sched.rotate_angle * s)
    return pts @ rotation_about_axis(axis, angle).T


def _add_global(pts, s, sched, rng):
    added = _unit_ball(sched.add_points * s, rng)
    return np.concatenate([pts, added]), added.shape[0]


def _add_local(pts, s, sched, rng):
    anchors = rng.choice(pts.shape[0], size=min(s, pts.shape[0]), replace=False)
    per_anchor = sched.add_points * s // anchors.size
    clumps = [
        pts[a] + rng.normal(scale=sched.add_local_sigma, size=(per_anchor, 3))
        for a in anchors
    ]
    added = np.concatenate(clumps)
    return np.concatenate([pts, added]), added.shape[0]


def _drop_global(pts, s, sched, rng):
    n = pts.shape[0]
    n_drop = int(np.floor(sched.drop_fraction * s * n))
    drop = rng.choice(n, size=n_drop, replace=False)
    keep = np.setdiff1d(np.arange(n), drop, assume_unique=True)
    return pts[keep]


def _drop_local(pts, s, sched, rng):
    n = pts.shape[0]
    total = int(np.floor(sched.drop_fraction * s * n))
    remaining = np.arange(n)
    coords = pts.astype(np.float64)
    for a in range(s):
        quota = total // s + (1 if a < total % s else 0)
        if quota == 0 or remaining.size == 0:
            continue
        quota = min(quota, remaining.size)
        anchor = remaining[rng.integers(remaining.size)]
        d = np.linalg.norm(coords[remaining] - coords[anchor], axis=1)
        ball = remaining[np.argsort(d, kind="stable")[:quota]]
        remaining = np.setdiff1d(remaining, ball, assume_unique=True)
    return pts[remaining]


def apply(cloud: PointCloud, spec: CorruptionSpec):
    """Corrupt one cloud; returns (corrupted cloud, per-point outlier flags).

    Flags mark inserted points for the add_* families and are all-false
    otherwise. Deterministic given ``spec.seed``.
    """
    rng = _rng(spec.seed)
    pts = cloud.points.astype(np.float64)
    s, sched = spec.severity, spec.schedule
    if spec.family == "jitter":
        out = _jitter(pts, s, sched, rng)
        n_added = 0
    elif spec.family == "scale":
        out = _scale(pts, s, sched, rng)
        n_added = 0
    elif spec.family == "rotate":
        out = _rotate(pts, s, sched, rng)
        n_added = 0
    elif spec.family == "add_global":
        out, n_added = _add_global(pts, s, sched, rng)
    elif spec.family == "add_local":
        out, n_added = _add_local(pts, s, sched, rng)
    elif spec.family == "drop_global":
        out = _drop_global(pts, s, sched, rng)
        n_added = 0
    else:
        out = _drop_local(pts, s, sched, rng)
        n_added = 0
    flags = np.zeros(out.shape[0], dtype=bool)
    if n_added:
        flags[-n_added:] = True
    return PointCloud(out.astype(np.float32)), flags


def sample_seed(base_seed: int, family: str, severity: int, index: int) -> int:
    """Stable per-sample seed so suites parallelize without shared RNG state."""
    ss = np.random.SeedSequence([base_seed, FAMILIES.index(family), severity, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def corrupt_dataset(dataset: Dataset, family: str, severity: int, seed: int,
                    schedule: Schedule = DEFAULT_SCHEDULE):
    """Corrupt every sample of a dataset; returns (Dataset, list of flag arrays)."""
    samples = []
    flags = []
    for i, sample in enumerate(dataset.samples):
        spec = CorruptionSpec(family, severity, sample_seed(seed, family, severity, i),
                              schedule)
        corrupted, flag = apply(sample.cloud, spec)
        samples.append(LabeledCloud(corrupted, sample.label))
        flags.append(flag)
    name = f"{dataset.split}_{family}_{severity}"
    return Dataset(tuple(samples), dataset.class_names, name), flags


def corruption_suite(dataset: Dataset, seed: int, schedule: Schedule = DEFAULT_SCHEDULE):
    """All 35 (family, severity) corrupted variants of a dataset.

    Returns a dict mapping (family, severity) to (Dataset, flags).
    """
    if len(dataset) == 0:
        raise ValueError("cannot corrupt an empty dataset")
    suite = {}
    for family in FAMILIES:
        for severity in SEVERITIES:
            suite[(family, severity)] = corrupt_dataset(dataset, family, severity, seed,
                                                        schedule)
    return suite


def schedule_with(base: Schedule = DEFAULT_SCHEDULE, **overrides) -> Schedule:
    return replace(base, **overrides)
