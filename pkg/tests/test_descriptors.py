"""Global descriptor and spin-image feature extraction."""

import numpy as np
import pytest

from openobj.descriptors import (
    DescriptorError,
    compute_feature_set,
    compute_good,
    compute_spin_image,
    extract_keypoints,
    project_distribution,
    projection_entropy,
    projection_variance,
)
from openobj.pointcloud import PointCloud
from openobj.synthgen import ShapeSpec, generate_view, random_rotation


def skewed_object(seed=0, m=800):
    """Anisotropic view with no mirror symmetry: box plus a corner blob."""
    rng = np.random.default_rng(seed)
    box = generate_view(
        ShapeSpec("box", (0.24, 0.16, 0.08), points=m, noise_sigma=0.001, seed=seed)
    ).points
    blob = rng.normal(scale=0.008, size=(m // 4, 3)) + np.array([0.1, 0.055, 0.03])
    return PointCloud(np.vstack([box, blob]))


class TestProjectDistribution:
    def test_all_points_at_origin(self):
        cloud = PointCloud(np.zeros((10, 3)))
        m = project_distribution(cloud, "XoY", l=1.0, n=5)
        assert m[2, 2] == 1.0
        assert m.sum() == 1.0
        assert np.count_nonzero(m) == 1

    def test_upper_bound_lands_in_last_bin(self):
        cloud = PointCloud([[0.5, 0.5, 0.5]])
        m = project_distribution(cloud, "XoY", l=1.0, n=5)
        assert m[4, 4] == 1.0

    def test_matches_floor_arithmetic_oracle(self):
        # grid of points over a 4 x 2 rectangle in the XoY plane
        xs, ys = np.meshgrid(np.linspace(-2, 2, 21), np.linspace(-1, 1, 11))
        pts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])
        n, l, eps = 5, 4.0, 1e-6
        got = project_distribution(PointCloud(pts), "XoY", l=l, n=n)
        expected = np.zeros((n, n))
        for x, y, _ in pts:
            r = int(np.floor(n * (x + l / 2) / (l + eps)))
            c = int(np.floor(n * (y + l / 2) / (l + eps)))
            expected[r, c] += 1
        expected /= expected.sum()
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_not_enclosing_raises(self):
        cloud = PointCloud([[0.6, 0, 0]])
        with pytest.raises(DescriptorError, match="not enclosing"):
            project_distribution(cloud, "XoY", l=1.0, n=5)

    def test_plane_conventions(self):
        # one point off-center along each axis pins the (alpha, beta) picks
        cloud = PointCloud([[0.4, 0.0, -0.4]])
        m_xoz = project_distribution(cloud, "XoZ", l=1.0, n=5)
        assert m_xoz[4, 0] == 1.0  # alpha = x, beta = z
        m_xoy = project_distribution(cloud, "XoY", l=1.0, n=5)
        assert m_xoy[4, 2] == 1.0  # alpha = x, beta = y
        m_yoz = project_distribution(cloud, "YoZ", l=1.0, n=5)
        assert m_yoz[2, 0] == 1.0  # alpha = y, beta = z


class TestProjectionStats:
    def test_entropy_two_equal_bins(self):
        assert projection_entropy([0.5, 0.5, 0, 0]) == pytest.approx(1.0)

    def test_entropy_uniform(self):
        assert projection_entropy(np.full(25, 1 / 25)) == pytest.approx(np.log2(25))

    def test_entropy_matches_oracle(self):
        rng = np.random.default_rng(3)
        v = rng.dirichlet(np.ones(49))
        oracle = -sum(p * np.log2(p) for p in v if p > 0)
        assert projection_entropy(v) == pytest.approx(oracle, abs=1e-12)

    def test_entropy_rejects_negative(self):
        with pytest.raises(DescriptorError):
            projection_entropy([-0.1, 1.1])

    def test_variance_point_mass(self):
        v = np.zeros(25)
        v[7] = 1.0
        assert projection_variance(v) == 0.0

    def test_variance_two_point(self):
        v = np.zeros(4)
        v[0] = 0.5
        v[2] = 0.5  # indices 1 and 3 (1-based), mu = 2, var = 1
        assert projection_variance(v) == pytest.approx(1.0)

    def test_variance_matches_oracle(self):
        rng = np.random.default_rng(4)
        v = rng.dirichlet(np.ones(30))
        mu = sum((i + 1) * p for i, p in enumerate(v))
        oracle = sum((i + 1 - mu) ** 2 * p for i, p in enumerate(v))
        assert projection_variance(v) == pytest.approx(oracle, abs=1e-12)


class TestComputeGood:
    def test_descriptor_lengths(self):
        cloud = skewed_object()
        assert len(compute_good(cloud, n=5)) == 75
        assert len(compute_good(cloud, n=15)) == 675

    def test_blocks_are_distributions(self):
        d = compute_good(skewed_object(), n=7)
        blocks = d.bins.reshape(3, -1)
        assert np.all(d.bins >= 0)
        np.testing.assert_allclose(blocks.sum(axis=1), 1.0, atol=1e-9)

    def test_uniform_scale_invariance(self):
        cloud = skewed_object(seed=5)
        d1 = compute_good(cloud, n=9)
        d2 = compute_good(PointCloud(cloud.points * 2.0), n=9)
        np.testing.assert_allclose(d1.bins, d2.bins, atol=1e-9)
        assert d1.order == d2.order

    def test_translation_invariance(self):
        cloud = skewed_object(seed=6)
        d1 = compute_good(cloud, n=9)
        d2 = compute_good(cloud.translate([0.7, -0.4, 1.1]), n=9)
        np.testing.assert_allclose(d1.bins, d2.bins, atol=1e-9)

    def test_duplication_invariance(self):
        cloud = skewed_object(seed=7)
        doubled = PointCloud(np.vstack([cloud.points, cloud.points]))
        d1 = compute_good(cloud, n=9)
        d2 = compute_good(doubled, n=9)
        np.testing.assert_allclose(d1.bins, d2.bins, atol=1e-9)

    def test_rigid_motion_similarity(self):
        cloud = skewed_object(seed=8)
        ref = compute_good(cloud, n=15).bins
        rng = np.random.default_rng(88)
        exact = 0
        for _ in range(25):
            moved = cloud.transform(random_rotation(rng), rng.uniform(-1, 1, 3))
            d = compute_good(moved, n=15).bins
            cos = d @ ref / (np.linalg.norm(d) * np.linalg.norm(ref))
            assert cos >= 0.99
            exact += int(np.array_equal(d, ref))
        assert exact >= 23

    def test_off_center_mass_handled(self):
        # cone: centroid well below the AABB midpoint must not error
        cone = generate_view(ShapeSpec("cone", (0.06, 0.2), points=600, seed=9))
        d = compute_good(cone, n=5)
        np.testing.assert_allclose(d.bins.reshape(3, -1).sum(axis=1), 1.0, atol=1e-9)


class TestKeypoints:
    def test_single_point(self):
        cloud = PointCloud([[0.4, 0.5, 0.6]])
        np.testing.assert_array_equal(extract_keypoints(cloud, 0.1), [[0.4, 0.5, 0.6]])

    def test_closest_to_center_wins(self):
        # two points in one voxel [0, 0.1): center at 0.05
        cloud = PointCloud([[0.01, 0.05, 0.05], [0.048, 0.05, 0.05]])
        keys = extract_keypoints(cloud, 0.1)
        assert len(keys) == 1
        np.testing.assert_allclose(keys[0], [0.048, 0.05, 0.05])

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 0.3, size=(400, 3))
        voxel = 0.05
        keys = extract_keypoints(PointCloud(pts), voxel)
        origin = pts.min(axis=0)
        buckets = {}
        for p in pts:
            buckets.setdefault(tuple(np.floor((p - origin) / voxel).astype(int)), []).append(p)
        expected = set()
        for cell, members in buckets.items():
            center = origin + (np.array(cell) + 0.5) * voxel
            best = min(members, key=lambda q: np.linalg.norm(q - center))
            expected.add(tuple(best))
        assert {tuple(k) for k in keys} == expected

    def test_subset_of_cloud(self):
        rng = np.random.default_rng(6)
        pts = rng.uniform(0, 0.2, size=(200, 3))
        keys = extract_keypoints(PointCloud(pts), 0.03)
        cloud_set = {tuple(p) for p in pts}
        assert all(tuple(k) in cloud_set for k in keys)


class TestSpinImage:
    def test_neighbor_on_normal_axis(self):
        cloud = PointCloud([[0, 0, 0.03]])
        img = compute_spin_image(cloud, [0, 0, 0], [0, 0, 1], 4, 0.05)
        # alpha = 0, beta = 0.03: row 0, col = floor((0.03+0.05)*4/0.05) = 6
        assert img.histogram[0, 6] == 1

    def test_neighbor_in_tangent_plane(self):
        cloud = PointCloud([[0.03, 0, 0]])
        img = compute_spin_image(cloud, [0, 0, 0], [0, 0, 1], 4, 0.05)
        # beta = 0, alpha = 0.03: row floor(0.03*4/0.05) = 2, col = 4
        assert img.histogram[2, 4] == 1

    def test_dimensions(self):
        cloud = PointCloud(np.random.default_rng(0).uniform(-0.04, 0.04, (30, 3)))
        img = compute_spin_image(cloud, [0, 0, 0], [0, 0, 1], 4, 0.05)
        assert img.histogram.shape == (5, 9)

    def test_matches_binning_oracle(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-0.06, 0.06, size=(50, 3))
        keypoint = np.zeros(3)
        normal = np.array([0.0, 0.0, 1.0])
        iw, sl = 4, 0.05
        img = compute_spin_image(PointCloud(pts), keypoint, normal, iw, sl)
        expected = np.zeros((iw + 1, 2 * iw + 1))
        for p in pts:
            d = p - keypoint
            beta = d @ normal
            alpha = np.sqrt(max(d @ d - beta**2, 0.0))
            if alpha > sl or abs(beta) > sl:
                continue
            row = min(int(np.floor(alpha * iw / sl)), iw)
            col = min(max(int(np.floor((beta + sl) * iw / sl)), 0), 2 * iw)
            expected[row, col] += 1
        np.testing.assert_array_equal(img.histogram, expected)

    def test_support_angle_filter(self):
        pts = np.array([[0.01, 0, 0.01], [0.01, 0, -0.01]])
        normals = np.array([[0, 0, 1.0], [0, 0, -1.0]])
        img = compute_spin_image(
            PointCloud(pts), [0, 0, 0], [0, 0, 1], 4, 0.05,
            support_angle=60.0, point_normals=normals,
        )
        assert img.histogram.sum() == 1  # the anti-parallel normal is skipped

    def test_pose_invariance(self):
        rng = np.random.default_rng(9)
        pts = rng.uniform(-0.04, 0.04, size=(60, 3))
        keypoint = np.array([0.01, -0.01, 0.0])
        normal = np.array([0.0, 0.0, 1.0])
        base = compute_spin_image(PointCloud(pts), keypoint, normal, 4, 0.05)
        for _ in range(5):
            rot = random_rotation(rng)
            shift = rng.uniform(-1, 1, 3)
            moved = compute_spin_image(
                PointCloud(pts @ rot.T + shift), rot @ keypoint + shift, rot @ normal, 4, 0.05
            )
            np.testing.assert_array_equal(base.histogram, moved.histogram)


class TestFeatureSet:
    def test_single_voxel_single_feature(self):
        rng = np.random.default_rng(10)
        pts = rng.uniform(0, 0.008, size=(60, 3))
        fs = compute_feature_set(PointCloud(pts), voxel=0.01)
        assert len(fs) == 1

    def test_histogram_shape_default(self):
        cloud = generate_view(ShapeSpec("box", (0.08, 0.06, 0.04), points=300, seed=2))
        fs = compute_feature_set(cloud, voxel=0.02, image_width=4)
        assert fs.as_matrix().shape[1] == 5 * 9

    def test_feature_count_equals_occupied_voxels(self):
        cloud = generate_view(ShapeSpec("cylinder", (0.04, 0.12), points=400, seed=3))
        fs = compute_feature_set(cloud, voxel=0.02)
        assert len(fs) == len(extract_keypoints(cloud, 0.02))
