import numpy as np
import pytest

from refocus3d.errors import InvalidCloudError
from refocus3d.geometry import (PointCloud, knn, normalize_unit_sphere,
                                rotation_about_axis)


def cloud(*rows):
    return PointCloud(np.array(rows, dtype=np.float32))


class TestPointCloud:
    def test_rejects_empty(self):
        with pytest.raises(InvalidCloudError):
            PointCloud(np.zeros((0, 3), dtype=np.float32))

    def test_rejects_wrong_shape(self):
        with pytest.raises(InvalidCloudError):
            PointCloud(np.zeros((4, 2), dtype=np.float32))

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidCloudError):
            cloud((0, 0, 0), (np.nan, 0, 0))

    def test_points_are_immutable(self):
        c = cloud((1, 2, 3))
        with pytest.raises(ValueError):
            c.points[0, 0] = 5.0


class TestDatasetInvariants:
    def test_train_split_must_cover_every_class(self):
        from refocus3d.geometry import Dataset, LabeledCloud

        sample = LabeledCloud(cloud((0, 0, 0)), 0)
        with pytest.raises(ValueError, match="no samples"):
            Dataset((sample,), ("a", "b"), split="train")
        Dataset((sample,), ("a", "b"), split="test")  # non-train splits may be partial

    def test_labels_must_index_class_names(self):
        from refocus3d.geometry import Dataset, LabeledCloud

        sample = LabeledCloud(cloud((0, 0, 0)), 5)
        with pytest.raises(ValueError, match="outside"):
            Dataset((sample,), ("a", "b"), split="test")


class TestNormalizeUnitSphere:
    def test_single_point_collapses_to_origin(self):
        out = normalize_unit_sphere(cloud((5, 5, 5)))
        assert np.array_equal(out.points, np.zeros((1, 3), dtype=np.float32))

    def test_already_normalized_is_unchanged(self):
        out = normalize_unit_sphere(cloud((1, 0, 0), (-1, 0, 0)))
        np.testing.assert_allclose(out.points, [[1, 0, 0], [-1, 0, 0]], atol=1e-6)

    def test_hand_arithmetic_example(self):
        # centroid (0,0,1), max norm after centering is 1
        out = normalize_unit_sphere(cloud((0, 0, 0), (0, 0, 2)))
        np.testing.assert_allclose(out.points, [[0, 0, -1], [0, 0, 1]], atol=1e-6)

    def test_postconditions_random(self, rng):
        c = PointCloud(rng.normal(3.0, 2.0, size=(200, 3)).astype(np.float32))
        out = normalize_unit_sphere(c)
        pts = out.points.astype(np.float64)
        assert np.abs(pts.mean(axis=0)).max() < 1e-6
        assert abs(np.linalg.norm(pts, axis=1).max() - 1.0) < 1e-6

    def test_idempotent(self, rng):
        c = PointCloud(rng.normal(0.0, 4.0, size=(100, 3)).astype(np.float32))
        once = normalize_unit_sphere(c)
        twice = normalize_unit_sphere(once)
        np.testing.assert_allclose(once.points, twice.points, atol=1e-6)


class TestKnn:
    def test_collinear(self):
        c = cloud((0, 0, 0), (1, 0, 0), (2, 0, 0), (10, 0, 0))
        assert set(knn(c, 0, 2)) == {1, 2}

    def test_exhaustive(self):
        c = cloud((0, 0, 0), (1, 0, 0), (2, 0, 0), (10, 0, 0))
        assert set(knn(c, 2, 3)) == {0, 1, 3}

    def test_k_too_large(self):
        c = cloud((0, 0, 0), (1, 0, 0))
        with pytest.raises(ValueError):
            knn(c, 0, 2)

    def test_tie_breaks_to_lower_index(self):
        c = cloud((0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0))
        assert list(knn(c, 0, 2)) == [1, 2]

    def test_matches_brute_force(self, rng, random_cloud):
        pts = random_cloud.points.astype(np.float64)
        for q in (0, 7, 49):
            got = knn(random_cloud, q, 5)
            d = np.linalg.norm(pts - pts[q], axis=1)
            d[q] = np.inf
            expected = sorted(range(len(d)), key=lambda i: (d[i], i))[:5]
            assert list(got) == expected

    def test_rotation_invariance(self, rng):
        for trial in range(5):
            pts = rng.standard_normal((40, 3))
            rot = rotation_about_axis(rng.standard_normal(3), rng.uniform(0, 2 * np.pi))
            a = PointCloud(pts.astype(np.float32))
            b = PointCloud((pts @ rot.T).astype(np.float32))
            assert list(knn(a, 3, 6)) == list(knn(b, 3, 6))
