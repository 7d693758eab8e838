import numpy as np
from django.test import SimpleTestCase

from dapstore.exceptions import ConfigError, DegenerateDemoError, EmptyCropError, ShapeError
from dapstore.geom import PointCloud, RigidTransform, random_transform
from .fields import AffordanceField, CorrespondenceMatrix
from .labels import (
    Demonstration,
    LabelConfig,
    crop_by_scores,
    label_affordance,
    label_correspondence,
    sample_demo_crop,
)


def unit_normals(n):
    return np.tile([0.0, 0.0, 1.0], (n, 1))


def cloud(positions):
    positions = np.asarray(positions, dtype=float)
    return PointCloud(positions, unit_normals(len(positions)))


def random_demo(rng, n_container=120, n_object=40):
    container = cloud(rng.uniform(-0.5, 0.5, size=(n_container, 3)))
    obj = cloud(rng.uniform(-0.1, 0.1, size=(n_object, 3)))
    return Demonstration(container, obj, random_transform(rng, 0.3))


class LabelConfigTestCase(SimpleTestCase):
    """Test cases for LabelConfig validation"""

    def test_defaults(self):
        """Defaults are the documented desk-scale thresholds"""
        cfg = LabelConfig()
        self.assertEqual((cfg.eps_place, cfg.eps_corr), (0.04, 0.02))

    def test_rejects_non_positive_eps(self):
        with self.assertRaises(ConfigError):
            LabelConfig(eps_place=0.0)

    def test_rejects_inverted_crop_scales(self):
        with self.assertRaises(ConfigError):
            LabelConfig(crop_scale_min=2.0, crop_scale_max=1.5)


class LabelAffordanceTestCase(SimpleTestCase):
    """Test cases for label_affordance"""

    def setUp(self):
        self.rng = np.random.default_rng(10)

    def test_far_object_is_all_negative(self):
        """An object 10 m away labels every container point -1"""
        demo = random_demo(self.rng)
        far = Demonstration(demo.container, demo.object, RigidTransform(np.eye(3), [10.0, 0.0, 0.0]))
        field = label_affordance(far, LabelConfig(eps_place=0.01))
        np.testing.assert_array_equal(field.scores, -np.ones(len(demo.container)))

    def test_huge_threshold_is_all_positive(self):
        """eps_place = 1e9 labels every container point +1"""
        demo = random_demo(self.rng)
        field = label_affordance(demo, LabelConfig(eps_place=1e9))
        np.testing.assert_array_equal(field.scores, np.ones(len(demo.container)))

    def test_matches_pairwise_oracle(self):
        """Labels equal a brute-force pairwise distance scan"""
        cfg = LabelConfig(eps_place=0.15)
        for _ in range(20):
            demo = random_demo(self.rng)
            placed = demo.goal.apply_points(demo.object.positions)
            expected = []
            for p in demo.container.positions:
                nearest = min(np.linalg.norm(placed - p, axis=1))
                expected.append(1.0 if nearest < cfg.eps_place else -1.0)
            np.testing.assert_array_equal(label_affordance(demo, cfg).scores, expected)

    def test_monotone_in_threshold(self):
        """Enlarging eps_place never turns a positive label negative"""
        demo = random_demo(self.rng)
        small = label_affordance(demo, LabelConfig(eps_place=0.05)).scores
        large = label_affordance(demo, LabelConfig(eps_place=0.2)).scores
        self.assertTrue(np.all(large[small > 0] > 0))


class LabelCorrespondenceTestCase(SimpleTestCase):
    """Test cases for label_correspondence"""

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_far_object_is_all_zero(self):
        demo = random_demo(self.rng)
        far = RigidTransform(np.eye(3), [10.0, 0.0, 0.0])
        matrix = label_correspondence(demo.container, demo.object, far, LabelConfig())
        self.assertEqual(matrix.shape, (len(demo.object), len(demo.container)))
        self.assertEqual(matrix.values.sum(), 0.0)

    def test_coincident_point(self):
        """One object point landing on one container point gives a single 1"""
        container = cloud([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
        obj = cloud([[0.5, 0.5, 0.5], [3.0, 3.0, 3.0]])
        goal = RigidTransform(np.eye(3), [0.5, -0.5, -0.5])
        matrix = label_correspondence(container, obj, goal, LabelConfig(eps_corr=1e-6))
        expected = np.zeros((2, 3))
        expected[0, 1] = 1.0
        np.testing.assert_array_equal(matrix.values, expected)

    def test_matches_pairwise_oracle(self):
        cfg = LabelConfig(eps_corr=0.1)
        for _ in range(20):
            demo = random_demo(self.rng)
            placed = demo.goal.apply_points(demo.object.positions)
            expected = np.array([[1.0 if np.linalg.norm(v - c) < cfg.eps_corr else 0.0
                                  for c in demo.container.positions] for v in placed])
            matrix = label_correspondence(demo.container, demo.object, demo.goal, cfg)
            np.testing.assert_array_equal(matrix.values, expected)

    def test_correspondence_implies_affordance(self):
        """C[i, j] = 1 implies container point j is labeled +1 when eps_place >= eps_corr"""
        cfg = LabelConfig(eps_place=0.12, eps_corr=0.1)
        demo = random_demo(self.rng)
        matrix = label_correspondence(demo.container, demo.object, demo.goal, cfg)
        field = label_affordance(demo, cfg)
        columns = np.flatnonzero(matrix.values.max(axis=0) > 0)
        self.assertTrue(np.all(field.scores[columns] == 1.0))


class SampleDemoCropTestCase(SimpleTestCase):
    """Test cases for sample_demo_crop"""

    def setUp(self):
        self.rng = np.random.default_rng(12)
        self.demo = random_demo(self.rng, n_container=400)

    def test_unit_scale_keeps_exact_box_members(self):
        """Scale range [1, 1] keeps exactly the container points inside the object box"""
        grid = np.array([[x, y, z] for x in range(4) for y in range(4) for z in range(4)], dtype=float) / 3.0
        container = cloud(grid)
        obj = cloud([[0.0, 0.0, 0.0], [0.5, 0.5, 0.5]])
        cfg = LabelConfig(crop_scale_min=1.0, crop_scale_max=1.0)
        crop = sample_demo_crop(container, obj, RigidTransform.identity(), cfg, rng_seed=0)
        inside = np.all(grid <= 0.5, axis=1)
        np.testing.assert_array_equal(crop.positions, grid[inside])

    def test_huge_scale_keeps_whole_container(self):
        cfg = LabelConfig(crop_scale_min=1e3, crop_scale_max=1e3)
        crop = sample_demo_crop(self.demo.container, self.demo.object, self.demo.goal, cfg, rng_seed=1)
        self.assertEqual(len(crop), len(self.demo.container))

    def test_fixed_seed_is_deterministic(self):
        cfg = LabelConfig()
        a = sample_demo_crop(self.demo.container, self.demo.object, self.demo.goal, cfg, rng_seed=5)
        b = sample_demo_crop(self.demo.container, self.demo.object, self.demo.goal, cfg, rng_seed=5)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_crop_stays_in_world_frame(self):
        """Cropped points are a subset of the container's positions"""
        crop = sample_demo_crop(self.demo.container, self.demo.object, self.demo.goal, LabelConfig(), rng_seed=2)
        rows = {tuple(p) for p in self.demo.container.positions}
        self.assertTrue(all(tuple(p) in rows for p in crop.positions))

    def test_isolated_object_is_degenerate(self):
        """A placement far from every container point fails after the retries"""
        far = RigidTransform(np.eye(3), [50.0, 50.0, 50.0])
        cfg = LabelConfig(crop_scale_min=1.0, crop_scale_max=1.0)
        with self.assertRaises(DegenerateDemoError):
            sample_demo_crop(self.demo.container, self.demo.object, far, cfg, rng_seed=3)


class CropByScoresTestCase(SimpleTestCase):
    """Test cases for crop_by_scores"""

    def setUp(self):
        self.container = cloud(np.arange(18, dtype=float).reshape(6, 3))

    def test_all_positive_is_identity(self):
        crop = crop_by_scores(self.container, AffordanceField(np.ones(6)))
        np.testing.assert_array_equal(crop.positions, self.container.positions)

    def test_all_negative_is_empty_crop(self):
        with self.assertRaises(EmptyCropError):
            crop_by_scores(self.container, AffordanceField(-np.ones(6)))

    def test_alternating_scores_keep_even_positions(self):
        scores = AffordanceField([1, -1, 1, -1, 1, -1])
        crop = crop_by_scores(self.container, scores)
        np.testing.assert_array_equal(crop.positions, self.container.positions[::2])

    def test_zero_scores_are_kept(self):
        crop = crop_by_scores(self.container, AffordanceField([0, -1, -1, -1, -1, -1e-12]))
        self.assertEqual(len(crop), 1)

    def test_length_mismatch(self):
        with self.assertRaises(ShapeError):
            crop_by_scores(self.container, AffordanceField(np.ones(5)))


class FieldTestCase(SimpleTestCase):
    """Test cases for the AffordanceField and CorrespondenceMatrix value types"""

    def test_non_finite_scores_rejected(self):
        with self.assertRaises(ShapeError):
            AffordanceField([0.0, np.nan])

    def test_matrix_range_checked(self):
        with self.assertRaises(ShapeError):
            CorrespondenceMatrix([[0.5, 1.5]])

    def test_labeled_rows(self):
        matrix = CorrespondenceMatrix([[0, 0], [0, 1], [0.2, 0]])
        np.testing.assert_array_equal(matrix.labeled_rows(), [1, 2])
