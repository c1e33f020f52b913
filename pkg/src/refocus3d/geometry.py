"""Point-cloud containers and basic geometric operations.

Coordinates are held as float32 (matching on-disk precision); distance and
statistics computations promote to float64 internally.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidCloudError


@dataclass(frozen=True)
class PointCloud:
    """Ordered set of N points in R^3, immutable after construction."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidCloudError(f"expected (N, 3) coordinates, got {pts.shape}")
        if pts.shape[0] < 1:
            raise InvalidCloudError("point cloud must contain at least one point")
        if not np.isfinite(pts).all():
            raise InvalidCloudError("point cloud contains non-finite coordinates")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def take(self, indices) -> "PointCloud":
        """New cloud from a subset of point indices (order as given)."""
        return PointCloud(self.points[np.asarray(indices, dtype=np.intp)])


@dataclass(frozen=True)
class LabeledCloud:
    cloud: PointCloud
    label: int


@dataclass(frozen=True)
class Dataset:
    """A split of labeled clouds plus the class-name table they index into."""

    samples: tuple
    class_names: tuple
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        c = len(self.class_names)
        for i, s in enumerate(self.samples):
            if not 0 <= s.label < c:
                raise ValueError(f"sample {i}: label {s.label} outside [0, {c})")
        if self.split == "train":
            seen = {s.label for s in self.samples}
            missing = [name for i, name in enumerate(self.class_names) if i not in seen]
            if missing:
                raise ValueError(f"train split has no samples for: {', '.join(missing)}")

    def __len__(self):
        return len(self.samples)

    @property
    def n_classes(self):
        return len(self.class_names)


def normalize_unit_sphere(cloud: PointCloud) -> PointCloud:
    """Center the cloud at its centroid and scale the farthest point to norm 1.

    A degenerate cloud whose points all coincide maps to all-zeros.
    """
    pts = cloud.points.astype(np.float64)
    pts = pts - pts.mean(axis=0)
    radius = np.linalg.norm(pts, axis=1).max()
    if radius > 0.0:
        pts = pts / radius
    return PointCloud(pts.astype(np.float32))


def knn(cloud: PointCloud, query_index: int, k: int) -> np.ndarray:
    """Indices of the k nearest points to ``query_index``, excluding itself.

    Euclidean distance, ties broken toward the lower index. Requires
    1 <= k <= N-1.
    """
    n = len(cloud)
    if not 0 <= query_index < n:
        raise ValueError(f"query_index {query_index} outside [0, {n})")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, N-1]; got k={k}, N={n}")
    pts = cloud.points.astype(np.float64)
    d = np.linalg.norm(pts - pts[query_index], axis=1)
    d[query_index] = np.inf
    order = np.argsort(d, kind="stable")
    return order[:k]


def pairwise_sq_distances(points: np.ndarray) -> np.ndarray:
    """Dense N x N squared-distance matrix in float64."""
    p = np.asarray(points, dtype=np.float64)
    sq = np.einsum("ij,ij->i", p, p)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (p @ p.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """3x3 rotation matrix about a (not necessarily unit) axis, Rodrigues form."""
    u = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ValueError("rotation axis must be nonzero")
    u = u / norm
    c, s = np.cos(angle), np.sin(angle)
    ux, uy, uz = u
    cross = np.array([[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]])
    return c * np.eye(3) + s * cross + (1.0 - c) * np.outer(u, u)
