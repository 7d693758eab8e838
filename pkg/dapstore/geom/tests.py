import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from dapstore.exceptions import FormatError, ShapeError, SizeError
from .cloud import PointCloud
from .ply import read_ply, write_ply
from .spatial import aabb_of, knn_indices, knn_positions, min_distances, superpoint_cluster
from .transforms import (
    RigidTransform,
    apply_transform,
    compose,
    invert,
    random_transform,
)


def random_cloud(rng, n, scale=1.0, scores=False):
    """Cloud with uniform positions and random unit normals"""
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    values = rng.uniform(-1, 1, size=n) if scores else None
    return PointCloud(rng.uniform(-scale, scale, size=(n, 3)), normals, values)


class PointCloudTestCase(SimpleTestCase):
    """Test cases for the PointCloud container"""

    def test_length_mismatch_rejected(self):
        """Positions and normals must have the same length"""
        with self.assertRaises(ShapeError):
            PointCloud(np.zeros((2, 3)), [[0, 0, 1]])

    def test_non_unit_normal_rejected(self):
        """Normals must be unit length"""
        with self.assertRaises(ShapeError):
            PointCloud([[0, 0, 0]], [[0, 0, 2]])

    def test_scores_length_checked(self):
        """Score channel must match the point count"""
        with self.assertRaises(ShapeError):
            PointCloud([[0, 0, 0]], [[0, 0, 1]], scores=[1.0, 2.0])

    def test_arrays_are_read_only(self):
        """Clouds are immutable values"""
        pc = PointCloud([[0, 0, 0]], [[0, 0, 1]])
        with self.assertRaises(ValueError):
            pc.positions[0, 0] = 1.0


class TransformTestCase(SimpleTestCase):
    """Test cases for apply_transform, compose and invert"""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_identity_leaves_cloud_unchanged(self):
        """Identity maps every point and normal to itself"""
        pc = random_cloud(self.rng, 20, scores=True)
        out = apply_transform(pc, RigidTransform.identity())
        np.testing.assert_array_equal(out.positions, pc.positions)
        np.testing.assert_array_equal(out.normals, pc.normals)
        np.testing.assert_array_equal(out.scores, pc.scores)

    def test_quarter_turn_about_z(self):
        """(1,0,0) rotated 90 degrees about z lands on (0,1,0); a z normal is unchanged"""
        pc = PointCloud([[1, 0, 0]], [[0, 0, 1]])
        out = apply_transform(pc, RigidTransform.from_yaw(np.pi / 2))
        np.testing.assert_allclose(out.positions[0], [0, 1, 0], atol=1e-12)
        np.testing.assert_allclose(out.normals[0], [0, 0, 1], atol=1e-12)

    def test_transform_then_inverse_round_trips(self):
        """Applying T then its inverse recovers the cloud"""
        pc = random_cloud(self.rng, 50)
        t = random_transform(self.rng)
        back = apply_transform(apply_transform(pc, t), invert(t))
        np.testing.assert_allclose(back.positions, pc.positions, atol=1e-9)
        np.testing.assert_allclose(back.normals, pc.normals, atol=1e-9)

    def test_rigidity_preserves_pairwise_distances(self):
        """Pairwise distances survive any rigid transform"""
        pc = random_cloud(self.rng, 30)
        out = apply_transform(pc, random_transform(self.rng, 5.0))
        before = np.linalg.norm(pc.positions[:, None] - pc.positions[None], axis=-1)
        after = np.linalg.norm(out.positions[:, None] - out.positions[None], axis=-1)
        np.testing.assert_allclose(after, before, atol=1e-9)

    def test_compose_with_identity(self):
        """compose(identity, T) is T"""
        t = random_transform(self.rng)
        out = compose(RigidTransform.identity(), t)
        np.testing.assert_allclose(out.rotation, t.rotation, atol=1e-15)
        np.testing.assert_allclose(out.translation, t.translation, atol=1e-15)

    def test_compose_with_inverse_is_identity(self):
        """compose(T, invert(T)) is the identity"""
        for _ in range(20):
            t = random_transform(self.rng, 3.0)
            out = compose(t, invert(t))
            np.testing.assert_allclose(out.rotation, np.eye(3), atol=1e-9)
            np.testing.assert_allclose(out.translation, np.zeros(3), atol=1e-9)

    def test_compose_order(self):
        """compose(A, B) applied to p equals A applied to B p"""
        for _ in range(20):
            a = random_transform(self.rng, 2.0)
            b = random_transform(self.rng, 2.0)
            p = self.rng.normal(size=(1, 3))
            expected = a.apply_points(b.apply_points(p))
            np.testing.assert_allclose(compose(a, b).apply_points(p), expected, atol=1e-9)

    def test_invert_pure_translation(self):
        """(I, d) inverts to (I, -d)"""
        out = invert(RigidTransform(np.eye(3), [1.0, -2.0, 3.0]))
        np.testing.assert_array_equal(out.rotation, np.eye(3))
        np.testing.assert_allclose(out.translation, [-1.0, 2.0, -3.0])

    def test_invert_is_involution(self):
        """invert(invert(T)) is T"""
        t = random_transform(self.rng, 4.0)
        twice = invert(invert(t))
        np.testing.assert_allclose(twice.rotation, t.rotation, atol=1e-12)
        np.testing.assert_allclose(twice.translation, t.translation, atol=1e-12)

    def test_invalid_rotation_rejected(self):
        """A reflection is not a rigid transform"""
        with self.assertRaises(ShapeError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


class KnnTestCase(SimpleTestCase):
    """Test cases for knn_indices"""

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_self_query_returns_own_index(self):
        """Querying a cloud against itself with k=1 returns each point's own index"""
        pc = random_cloud(self.rng, 40)
        self.assertEqual(knn_indices(pc, pc, 1), [[i] for i in range(40)])

    def test_collinear_keys(self):
        """Keys at x=0,1,2 and a query at x=0.9 give [x=1, x=0]"""
        z = [[0, 0, 1]] * 3
        key = PointCloud([[0, 0, 0], [1, 0, 0], [2, 0, 0]], z)
        query = PointCloud([[0.9, 0, 0]], [[0, 0, 1]])
        self.assertEqual(knn_indices(query, key, 2), [[1, 0]])

    def test_ties_broken_by_lower_index(self):
        """Equidistant keys are ordered by index"""
        z = [[0, 0, 1]] * 3
        key = PointCloud([[1, 0, 0], [-1, 0, 0], [0, 1, 0]], z)
        query = PointCloud([[0, 0, 0]], [[0, 0, 1]])
        self.assertEqual(knn_indices(query, key, 3), [[0, 1, 2]])

    def test_matches_brute_force(self):
        """Random clouds agree with an exhaustive distance sort"""
        query = random_cloud(self.rng, 60)
        key = random_cloud(self.rng, 80)
        result = knn_positions(query.positions, key.positions, 5)
        for i, p in enumerate(query.positions):
            distances = [np.sqrt(np.sum((p - q) ** 2)) for q in key.positions]
            expected = sorted(range(len(distances)), key=lambda j: (distances[j], j))[:5]
            self.assertEqual(result[i].tolist(), expected)

    def test_permuting_keys_permutes_indices(self):
        """Neighbor sets follow a permutation of the key cloud"""
        query = random_cloud(self.rng, 30)
        key = random_cloud(self.rng, 50)
        perm = self.rng.permutation(50)
        base = knn_positions(query.positions, key.positions, 4)
        permuted = knn_positions(query.positions, key.positions[perm], 4)
        np.testing.assert_array_equal(perm[permuted], base)

    def test_too_few_keys(self):
        """k larger than the key cloud is a size error"""
        pc = random_cloud(self.rng, 3)
        with self.assertRaises(SizeError):
            knn_indices(pc, pc, 4)


class MinDistanceTestCase(SimpleTestCase):
    """Test cases for min_distances"""

    def setUp(self):
        self.rng = np.random.default_rng(2)

    def test_same_cloud_gives_zeros(self):
        """Every point is at distance zero from itself"""
        pc = random_cloud(self.rng, 25)
        np.testing.assert_array_equal(min_distances(pc, pc), np.zeros(25))

    def test_single_point(self):
        """Origin against points at distance 1 and 2 gives 1"""
        a = PointCloud([[0, 0, 0]], [[0, 0, 1]])
        b = PointCloud([[0, 2, 0], [1, 0, 0]], [[0, 0, 1], [0, 0, 1]])
        np.testing.assert_allclose(min_distances(a, b), [1.0])

    def test_matches_brute_force(self):
        """Random clouds agree with the pairwise oracle"""
        a = random_cloud(self.rng, 40)
        b = random_cloud(self.rng, 70)
        expected = np.min(np.linalg.norm(a.positions[:, None] - b.positions[None], axis=-1), axis=1)
        np.testing.assert_allclose(min_distances(a, b), expected, rtol=1e-12, atol=1e-15)

    def test_empty_reference(self):
        """An empty reference cloud is a size error"""
        a = random_cloud(self.rng, 3)
        with self.assertRaises(SizeError):
            min_distances(a, PointCloud(np.zeros((0, 3)), np.zeros((0, 3))))


class AabbTestCase(SimpleTestCase):
    """Test cases for aabb_of"""

    def test_single_point(self):
        """A single point gives a degenerate box"""
        box = aabb_of(PointCloud([[1, 2, 3]], [[0, 0, 1]]))
        np.testing.assert_array_equal(box.min, [1, 2, 3])
        np.testing.assert_array_equal(box.max, [1, 2, 3])

    def test_unit_cube_with_margin(self):
        """Unit-cube corners with margin 0.1 give [-0.1, 1.1]^3"""
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
        box = aabb_of(PointCloud(corners, np.tile([0.0, 0.0, 1.0], (8, 1))), 0.1)
        np.testing.assert_allclose(box.min, [-0.1] * 3)
        np.testing.assert_allclose(box.max, [1.1] * 3)

    def test_box_is_tight(self):
        """Every point is inside; shrinking any face excludes a point"""
        pc = random_cloud(np.random.default_rng(3), 100)
        box = aabb_of(pc)
        self.assertTrue(np.all(box.contains(pc.positions)))
        eps = 1e-9
        for axis in range(3):
            self.assertTrue(np.any(pc.positions[:, axis] < box.min[axis] + eps))
            self.assertTrue(np.any(pc.positions[:, axis] > box.max[axis] - eps))

    def test_empty_cloud(self):
        """The box of an empty cloud is a size error"""
        with self.assertRaises(SizeError):
            aabb_of(PointCloud(np.zeros((0, 3)), np.zeros((0, 3))))


class SuperpointTestCase(SimpleTestCase):
    """Test cases for superpoint_cluster"""

    def setUp(self):
        self.rng = np.random.default_rng(4)

    def test_large_voxel_gives_centroid(self):
        """One voxel covering the cloud collapses it to its centroid"""
        positions = self.rng.uniform(0.1, 0.9, size=(30, 3))
        pc = PointCloud(positions, np.tile([0.0, 0.0, 1.0], (30, 1)))
        out = superpoint_cluster(pc, 10.0)
        self.assertEqual(len(out), 1)
        np.testing.assert_allclose(out.positions[0], positions.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(out.normals[0], [0, 0, 1])

    def test_distinct_voxels_preserved(self):
        """Two points in different voxels survive unchanged"""
        pc = PointCloud([[0.05, 0.05, 0.05], [0.55, 0.05, 0.05]], [[1, 0, 0], [0, 1, 0]])
        out = superpoint_cluster(pc, 0.1)
        np.testing.assert_allclose(out.positions, pc.positions)
        np.testing.assert_allclose(out.normals, pc.normals)

    def test_cancelling_normals_fall_back_to_first_member(self):
        """Opposed normals in one voxel fall back to the first member's normal"""
        pc = PointCloud([[0.01, 0.01, 0.01], [0.02, 0.02, 0.02]], [[1, 0, 0], [-1, 0, 0]])
        out = superpoint_cluster(pc, 1.0)
        np.testing.assert_allclose(out.normals[0], [1, 0, 0])

    def test_matches_bucketing_oracle(self):
        """Per-voxel means agree with a dictionary bucketing oracle"""
        pc = random_cloud(self.rng, 500, scores=True)
        voxel = 0.25
        buckets = {}
        for i, p in enumerate(pc.positions):
            buckets.setdefault(tuple(np.floor(p / voxel).astype(int)), []).append(i)
        out = superpoint_cluster(pc, voxel)
        self.assertEqual(len(out), len(buckets))
        for row, key in enumerate(sorted(buckets)):
            members = buckets[key]
            np.testing.assert_allclose(out.positions[row], pc.positions[members].mean(axis=0), atol=1e-12)
            np.testing.assert_allclose(out.scores[row], pc.scores[members].mean(), atol=1e-12)
        self.assertLessEqual(len(out), len(pc))
        np.testing.assert_allclose(np.linalg.norm(out.normals, axis=1), 1.0, atol=1e-6)


class PlyTestCase(SimpleTestCase):
    """Test cases for PLY import/export"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.pc = random_cloud(np.random.default_rng(5), 12, scores=True)

    def test_ascii_header(self):
        """ASCII files declare the score attribute next to the vertex fields"""
        path = write_ply(self.pc, Path(self.tmp.name) / "cloud.ply")
        header = path.read_text().split("end_header")[0]
        self.assertTrue(header.startswith("ply"))
        self.assertIn("format ascii", header)
        self.assertIn(" score", header)
        self.assertIn("element vertex 12", header)

    def test_ascii_and_binary_read_back(self):
        """Both encodings reproduce positions, normals and scores"""
        for binary in (False, True):
            with self.subTest(binary=binary):
                path = write_ply(self.pc, Path(self.tmp.name) / f"cloud_{binary}.ply", binary=binary)
                back = read_ply(path)
                np.testing.assert_allclose(back.positions, self.pc.positions, atol=1e-5)
                np.testing.assert_allclose(back.normals, self.pc.normals, atol=1e-5)
                np.testing.assert_allclose(back.scores, self.pc.scores, atol=1e-5)

    def test_without_scores(self):
        pc = random_cloud(np.random.default_rng(6), 5)
        back = read_ply(write_ply(pc, Path(self.tmp.name) / "plain.ply", binary=True))
        self.assertIsNone(back.scores)
        self.assertEqual(len(back), 5)

    def test_bad_magic(self):
        """Files that are not PLY are rejected"""
        path = Path(self.tmp.name) / "bad.ply"
        path.write_text("plx\nformat ascii 1.0\nend_header\n")
        with self.assertRaises(FormatError):
            read_ply(path)

    def test_missing_normals(self):
        path = Path(self.tmp.name) / "points.ply"
        path.write_text("ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\n"
                        "property double z\nend_header\n0 0 0\n1 0 0\n")
        with self.assertRaises(FormatError):
            read_ply(path)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            read_ply(Path(self.tmp.name) / "absent.ply")
