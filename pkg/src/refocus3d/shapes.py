"""Synthetic 3D shape sampler and desk-scale dataset builder.

Eight parametric surface classes stand in for a CAD-derived corpus. Every
instance gets random intrinsic proportions, a random rotation about the
vertical axis, a random per-axis stretch in [0.8, 1.25] (isotropic for the
sphere class, whose identity is exactly its equal point norms), and is then
normalized to the unit sphere.
"""

import zlib

import numpy as np

from .geometry import Dataset, LabeledCloud, PointCloud, normalize_unit_sphere, rotation_about_axis

SHAPE_KINDS = (
    "sphere",
    "box",
    "cylinder",
    "cone",
    "torus",
    "plane",
    "two_spheres",
    "pyramid",
)

MIN_POINTS = 64

_STRETCH_LO, _STRETCH_HI = 0.8, 1.25


def _unit_directions(n, rng):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sphere_surface(n, radius, rng):
    # Antithetic pairs keep the empirical centroid at the exact center, so
    # unit-sphere normalization preserves equal point norms.
    half = n // 2
    d = _unit_directions(half, rng)
    pts = np.concatenate([d, -d], axis=0)
    if n % 2:
        pts = np.concatenate([pts, _unit_directions(1, rng)], axis=0)
    return radius * pts


def _rect_patch(n, ax, ay, rng):
    xy = rng.uniform(-1.0, 1.0, size=(n, 2)) * [ax, ay]
    return np.column_stack([xy[:, 0], xy[:, 1], np.zeros(n)])


def _triangle_patch(n, a, b, c, rng):
    u = np.sqrt(rng.uniform(size=n))
    v = rng.uniform(size=n)
    return (1 - u)[:, None] * a + (u * (1 - v))[:, None] * b + (u * v)[:, None] * c


def _disk_patch(n, radius, z, rng):
    r = radius * np.sqrt(rng.uniform(size=n))
    t = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([r * np.cos(t), r * np.sin(t), np.full(n, z)])


def _split_counts(n, weights, rng):
    probs = np.asarray(weights, dtype=np.float64)
    probs = probs / probs.sum()
    picks = rng.choice(len(probs), size=n, p=probs)
    return np.bincount(picks, minlength=len(probs))


def _box(n, rng):
    a, b, c = rng.uniform(0.4, 1.0, size=3)
    areas = [b * c, b * c, a * c, a * c, a * b, a * b]
    counts = _split_counts(n, areas, rng)
    faces = []
    for face, m in enumerate(counts):
        if m == 0:
            continue
        uv = rng.uniform(-1.0, 1.0, size=(m, 2))
        axis, sign = divmod(face, 2)
        pts = np.empty((m, 3))
        others = [i for i in range(3) if i != axis]
        pts[:, axis] = (1.0 if sign == 0 else -1.0) * (a, b, c)[axis]
        pts[:, others[0]] = uv[:, 0] * (a, b, c)[others[0]]
        pts[:, others[1]] = uv[:, 1] * (a, b, c)[others[1]]
        faces.append(pts)
    return np.concatenate(faces, axis=0)


def _cylinder(n, rng):
    r = rng.uniform(0.3, 0.6)
    h = rng.uniform(1.0, 1.8)
    side_area = 2.0 * np.pi * r * h
    cap_area = np.pi * r * r
    n_side, n_top, n_bot = _split_counts(n, [side_area, cap_area, cap_area], rng)
    t = rng.uniform(0.0, 2.0 * np.pi, size=n_side)
    z = rng.uniform(-h / 2.0, h / 2.0, size=n_side)
    side = np.column_stack([r * np.cos(t), r * np.sin(t), z])
    return np.concatenate(
        [side, _disk_patch(n_top, r, h / 2.0, rng), _disk_patch(n_bot, r, -h / 2.0, rng)]
    )


def _cone(n, rng):
    r = rng.uniform(0.4, 0.8)
    h = rng.uniform(0.9, 1.6)
    lateral = np.pi * r * np.hypot(r, h)
    base = np.pi * r * r
    n_lat, n_base = _split_counts(n, [lateral, base], rng)
    s = np.sqrt(rng.uniform(size=n_lat))  # area grows linearly from the apex
    t = rng.uniform(0.0, 2.0 * np.pi, size=n_lat)
    lat = np.column_stack([r * s * np.cos(t), r * s * np.sin(t), h * (1.0 - s)])
    return np.concatenate([lat, _disk_patch(n_base, r, 0.0, rng)])


def _torus(n, rng):
    major = rng.uniform(0.6, 1.0)
    minor = major * rng.uniform(0.25, 0.4)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    phi = np.empty(n)
    filled = 0
    while filled < n:  # rejection in the tube angle keeps area uniform
        cand = rng.uniform(0.0, 2.0 * np.pi, size=2 * (n - filled))
        keep = cand[rng.uniform(size=cand.size) < (major + minor * np.cos(cand)) / (major + minor)]
        take = keep[: n - filled]
        phi[filled : filled + take.size] = take
        filled += take.size
    ring = major + minor * np.cos(phi)
    return np.column_stack([ring * np.cos(theta), ring * np.sin(theta), minor * np.sin(phi)])


def _plane(n, rng):
    ax = rng.uniform(0.6, 1.2)
    ay = rng.uniform(0.4, 1.0)
    return _rect_patch(n, ax, ay, rng)


def _two_spheres(n, rng):
    r1, r2 = rng.uniform(0.3, 0.5, size=2)
    gap = rng.uniform(1.2, 1.6)
    n1, n2 = _split_counts(n, [r1 * r1, r2 * r2], rng)
    s1 = _sphere_surface(n1, r1, rng) + [-gap / 2.0, 0.0, 0.0]
    s2 = _sphere_surface(n2, r2, rng) + [gap / 2.0, 0.0, 0.0]
    return np.concatenate([s1, s2])


def _pyramid(n, rng):
    a = rng.uniform(0.5, 0.9)
    h = rng.uniform(0.8, 1.5)
    apex = np.array([0.0, 0.0, h])
    corners = np.array([[a, a, 0.0], [-a, a, 0.0], [-a, -a, 0.0], [a, -a, 0.0]])
    slant_area = 4.0 * (a * np.hypot(a, h))  # each face: base 2a, height hypot(a, h)
    base_area = 4.0 * a * a
    counts = _split_counts(n, [base_area] + [slant_area / 4.0] * 4, rng)
    parts = [_rect_patch(counts[0], a, a, rng)]
    for face in range(4):
        b, c = corners[face], corners[(face + 1) % 4]
        parts.append(_triangle_patch(counts[face + 1], apex, b, c, rng))
    return np.concatenate(parts)


_SAMPLERS = {
    "sphere": lambda n, rng: _sphere_surface(n, rng.uniform(0.5, 1.5), rng),
    "box": _box,
    "cylinder": _cylinder,
    "cone": _cone,
    "torus": _torus,
    "plane": _plane,
    "two_spheres": _two_spheres,
    "pyramid": _pyramid,
}


def synth_shape(kind: str, n_points: int, rng_seed: int) -> PointCloud:
    """Sample ``n_points`` approximately uniformly on a random instance of ``kind``.

    The result is normalized to the unit sphere. Identical seeds yield
    bit-identical clouds.
    """
    kind = kind.replace("-", "_")
    if kind not in _SAMPLERS:
        raise ValueError(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")
    if n_points < MIN_POINTS:
        raise ValueError(f"n_points must be >= {MIN_POINTS}, got {n_points}")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    pts = _SAMPLERS[kind](n_points, rng)
    if kind != "sphere":
        pts = pts * rng.uniform(_STRETCH_LO, _STRETCH_HI, size=3)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    pts = pts @ rotation_about_axis(np.array([0.0, 0.0, 1.0]), angle).T
    return normalize_unit_sphere(PointCloud(pts))


def _instance_seed(seed, split, class_index, instance):
    tag = zlib.crc32(split.encode("utf-8"))
    ss = np.random.SeedSequence([seed, tag, class_index, instance])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def build_dataset(per_class: int, n_points: int, seed: int, split: str = "train") -> Dataset:
    """Deterministic synthetic dataset with ``per_class`` clouds of every shape kind."""
    samples = []
    for label, kind in enumerate(SHAPE_KINDS):
        for i in range(per_class):
            cloud = synth_shape(kind, n_points, _instance_seed(seed, split, label, i))
            samples.append(LabeledCloud(cloud, label))
    return Dataset(tuple(samples), SHAPE_KINDS, split)
