import math

import numpy as np
import torch
from django.test import SimpleTestCase

from dapstore.afford import make_schedule
from dapstore.corr import extract_matches
from dapstore.exceptions import (
    ConfigError,
    DegenerateGeometryError,
    InsufficientMatchesError,
    NoCandidatesError,
    ShapeError,
)
from dapstore.geom import PointCloud, RigidTransform, apply_transform, compose, random_transform
from dapstore.labeling import Demonstration, LabelConfig, crop_by_scores, label_affordance, label_correspondence
from .candidates import Candidate, collision_count, rank_candidates
from .inference import InferConfig, cap_storage_pose, infer_storage_pose
from .solver import arun_solve, weighted_residual


def unit_normals(rng, n):
    normals = rng.normal(size=(n, 3))
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


def grid_object(rng, spacing=0.05):
    axes = [np.arange(3) * spacing, np.arange(3) * spacing, np.arange(2) * spacing]
    positions = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    positions -= positions.mean(axis=0)
    return PointCloud(positions, unit_normals(rng, positions.shape[0]))


def make_candidate(index, collisions, matches=10):
    return Candidate(index, RigidTransform.identity(), collisions, matches, 50)


class OracleAfford:
    """Noise prediction that steers every sample to fixed scores"""

    def __init__(self, s0, sched):
        self.s0 = torch.as_tensor(s0, dtype=torch.float64)
        self.sched = sched

    def __call__(self, scores, t, context):
        _, alpha_bar, _ = self.sched.at(t)
        return (scores - math.sqrt(alpha_bar) * self.s0) / math.sqrt(1.0 - alpha_bar)


class OracleCorr:
    def __init__(self, goal, cfg):
        self.goal = goal
        self.cfg = cfg

    def predict(self, crop, obj):
        return label_correspondence(crop, obj, self.goal, self.cfg)


class ArunSolveTestCase(SimpleTestCase):
    """Test cases for arun_solve"""

    def setUp(self):
        self.rng = np.random.default_rng(50)

    def test_identity(self):
        src = self.rng.normal(size=(10, 3))
        result = arun_solve(src, src, np.ones(10))
        np.testing.assert_allclose(result.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(result.translation, np.zeros(3), atol=1e-12)

    def test_recovers_random_transforms(self):
        for _ in range(100):
            n = int(self.rng.integers(10, 201))
            src = self.rng.uniform(-1, 1, size=(n, 3))
            truth = random_transform(self.rng)
            result = arun_solve(src, truth.apply_points(src))
            self.assertLess(np.linalg.norm(result.rotation - truth.rotation), 1e-9)
            self.assertLess(np.linalg.norm(result.translation - truth.translation), 1e-9)

    def test_noisy_targets(self):
        for _ in range(20):
            src = self.rng.uniform(-1, 1, size=(100, 3))
            truth = random_transform(self.rng)
            dst = truth.apply_points(src) + self.rng.normal(scale=1e-3, size=(100, 3))
            result = arun_solve(src, dst)
            self.assertLess(np.linalg.norm(result.translation - truth.translation), 5e-3)

    def test_mirrored_targets(self):
        """A reflected point set still yields a proper rotation"""
        src = self.rng.normal(size=(20, 3))
        dst = src * np.array([-1.0, 1.0, 1.0])
        result = arun_solve(src, dst)
        self.assertAlmostEqual(np.linalg.det(result.rotation), 1.0, places=12)
        self.assertGreater(weighted_residual(result, src, dst), 1e-3)

    def test_mirrored_planar_targets(self):
        src = np.column_stack([self.rng.normal(size=(20, 2)), np.zeros(20)])
        dst = src * np.array([-1.0, 1.0, 1.0])
        result = arun_solve(src, dst)
        self.assertAlmostEqual(np.linalg.det(result.rotation), 1.0, places=12)
        self.assertLess(weighted_residual(result, src, dst), 1e-18)

    def test_left_invariance(self):
        for _ in range(10):
            src = self.rng.normal(size=(30, 3))
            dst = random_transform(self.rng).apply_points(src)
            g = random_transform(self.rng)
            moved = arun_solve(g.apply_points(src), g.apply_points(dst))
            self.assertLess(weighted_residual(moved, g.apply_points(src), g.apply_points(dst)), 1e-18)

    def test_never_worse_than_identity(self):
        for _ in range(20):
            src = self.rng.normal(size=(15, 3))
            dst = self.rng.normal(size=(15, 3))
            weights = self.rng.uniform(0.1, 1.0, size=15)
            result = arun_solve(src, dst, weights)
            identity = weighted_residual(RigidTransform.identity(), src, dst, weights)
            self.assertLessEqual(weighted_residual(result, src, dst, weights), identity + 1e-12)

    def test_uniform_weights_match_unweighted(self):
        src = self.rng.normal(size=(12, 3))
        dst = self.rng.normal(size=(12, 3))
        a = arun_solve(src, dst)
        b = arun_solve(src, dst, np.full(12, 0.3))
        np.testing.assert_allclose(a.rotation, b.rotation, atol=1e-12)
        np.testing.assert_allclose(a.translation, b.translation, atol=1e-12)

    def test_degenerate_inputs(self):
        line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
        with self.assertRaises(DegenerateGeometryError):
            arun_solve(line, line + 1.0)
        with self.assertRaises(InsufficientMatchesError):
            arun_solve(np.eye(3)[:2], np.eye(3)[:2])
        with self.assertRaises(ShapeError):
            arun_solve(np.eye(3), np.eye(3)[:2])
        with self.assertRaises(ConfigError):
            arun_solve(np.eye(3), np.eye(3), [1.0, 0.0, 1.0])


class CollisionCountTestCase(SimpleTestCase):
    """Test cases for collision_count"""

    def setUp(self):
        self.rng = np.random.default_rng(51)
        self.crop = PointCloud(self.rng.uniform(-0.2, 0.2, size=(200, 3)), unit_normals(self.rng, 200))

    def test_far_object(self):
        obj = PointCloud(self.rng.uniform(-0.05, 0.05, size=(20, 3)) + 10.0, unit_normals(self.rng, 20))
        self.assertEqual(collision_count(self.crop, obj, 0.005), 0)

    def test_covering_object(self):
        obj = PointCloud([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]], unit_normals(self.rng, 2))
        self.assertEqual(collision_count(self.crop, obj, 0.0), 200)

    def test_brute_force_oracle(self):
        for _ in range(20):
            obj = PointCloud(self.rng.uniform(-0.1, 0.1, size=(10, 3)) + self.rng.uniform(-0.1, 0.1, 3),
                             unit_normals(self.rng, 10))
            margin = float(self.rng.uniform(0, 0.02))
            lower = obj.positions.min(axis=0) - margin
            upper = obj.positions.max(axis=0) + margin
            expected = sum(all(lower[a] < p[a] < upper[a] for a in range(3)) for p in self.crop.positions)
            self.assertEqual(collision_count(self.crop, obj, margin), expected)


class RankCandidatesTestCase(SimpleTestCase):
    """Test cases for rank_candidates"""

    def test_ascending_collisions(self):
        ranked = rank_candidates([make_candidate(i, c) for i, c in enumerate([5, 0, 2])])
        self.assertEqual([c.index for c in ranked], [1, 2, 0])

    def test_stable_on_ties(self):
        ranked = rank_candidates([make_candidate(i, 3) for i in range(5)])
        self.assertEqual([c.index for c in ranked], [0, 1, 2, 3, 4])

    def test_more_matches_win_ties(self):
        ranked = rank_candidates([make_candidate(0, 1, 5), make_candidate(1, 1, 9)])
        self.assertEqual([c.index for c in ranked], [1, 0])

    def test_reference_sort(self):
        rng = np.random.default_rng(52)
        for _ in range(50):
            cands = [make_candidate(i, int(rng.integers(0, 4)), int(rng.integers(3, 6))) for i in range(8)]
            expected = sorted(cands, key=lambda c: (c.collision_count, -c.match_count, c.index))
            self.assertEqual([c.index for c in rank_candidates(cands)], [c.index for c in expected])

    def test_empty(self):
        with self.assertRaises(NoCandidatesError):
            rank_candidates([])


class InferStoragePoseTestCase(SimpleTestCase):
    """Test cases for infer_storage_pose with oracle models"""

    def setUp(self):
        rng = np.random.default_rng(53)
        self.obj = grid_object(rng)
        self.goal = compose(RigidTransform.from_yaw(0.7, [0.1, 0.2, 0.05]),
                            RigidTransform.from_rotvec([0.3, -0.2, 0.1]))
        placed = apply_transform(self.obj, self.goal)
        clutter = rng.uniform(-1, 1, size=(40, 3)) + [3.0, 0.0, 0.0]
        self.container = PointCloud(np.vstack([placed.positions, clutter]),
                                    np.vstack([placed.normals, unit_normals(rng, 40)]))
        self.label_cfg = LabelConfig(eps_place=0.04, eps_corr=0.02)
        self.labels = label_affordance(Demonstration(self.container, self.obj, self.goal), self.label_cfg)
        self.sched = make_schedule(20, 1e-4, 0.05)
        self.corr = OracleCorr(self.goal, self.label_cfg)

    def test_oracle_recovers_goal(self):
        cfg = InferConfig(K=1, contact_offset=0.0)
        result = infer_storage_pose(OracleAfford(self.labels.scores, self.sched), self.corr,
                                    self.container, self.obj, self.sched, 11, cfg)
        self.assertEqual(len(result.ranked), 1)
        self.assertEqual(result.best.match_count, len(self.obj))
        self.assertEqual(result.best.crop_size, len(self.obj))
        np.testing.assert_allclose(result.best.transform.rotation, self.goal.rotation, atol=1e-6)
        np.testing.assert_allclose(result.best.transform.translation, self.goal.translation, atol=1e-6)

    def test_deterministic_ranking(self):
        cfg = InferConfig(K=8, contact_offset=0.0)

        def run(workers):
            result = infer_storage_pose(OracleAfford(self.labels.scores, self.sched), self.corr,
                                        self.container, self.obj, self.sched, 5, cfg, max_workers=workers)
            return [(c.index, c.collision_count, c.transform.to_dict()) for c in result.ranked]

        first = run(1)
        self.assertEqual(len(first), 8)
        self.assertEqual(first, run(1))
        self.assertEqual(first, run(4))

    def test_all_candidates_fail(self):
        everything_negative = OracleAfford(-np.ones(len(self.container)), self.sched)
        with self.assertRaises(NoCandidatesError) as ctx:
            infer_storage_pose(everything_negative, self.corr, self.container, self.obj, self.sched, 0,
                               InferConfig(K=3))
        self.assertEqual(ctx.exception.failures, [(0, "empty_crop"), (1, "empty_crop"), (2, "empty_crop")])
        self.assertEqual(ctx.exception.failure_counts(), {"empty_crop": 3})

    def test_trajectory_recorded(self):
        result = infer_storage_pose(OracleAfford(self.labels.scores, self.sched), self.corr, self.container,
                                    self.obj, self.sched, 0, InferConfig(K=2), record_trajectory=True)
        self.assertEqual(len(result.trajectory), self.sched.T + 1)

    def test_default_targets_are_matched_positions(self):
        """With the default config the pose is the SVD fit over the raw matched pairs"""
        cfg = InferConfig(K=1)
        self.assertEqual(cfg.contact_offset, 0.0)
        result = infer_storage_pose(OracleAfford(self.labels.scores, self.sched), self.corr,
                                    self.container, self.obj, self.sched, 3, cfg)
        crop = crop_by_scores(self.container, self.labels)
        matches = extract_matches(self.corr.predict(crop, self.obj), self.obj, crop, cfg.match_threshold)
        expected = arun_solve(matches.source_points(self.obj), matches.target_points(crop), matches.weights)
        np.testing.assert_allclose(result.best.transform.rotation, expected.rotation, atol=1e-12)
        np.testing.assert_allclose(result.best.transform.translation, expected.translation, atol=1e-12)

    def test_contact_offset_shifts_solution(self):
        """Targets move along the container normals"""
        result = infer_storage_pose(OracleAfford(self.labels.scores, self.sched), self.corr,
                                    self.container, self.obj, self.sched, 0, InferConfig(K=1, contact_offset=0.01))
        dst = apply_transform(self.obj, self.goal)
        expected = arun_solve(self.obj.positions, dst.positions + 0.01 * dst.normals)
        np.testing.assert_allclose(result.best.transform.translation, expected.translation, atol=1e-9)

    def test_cap_single_candidate(self):
        confident = lambda scores, t, context: 40.0 * torch.as_tensor(self.labels.scores)  # noqa: E731
        result = cap_storage_pose(confident, self.corr, self.container, self.obj, InferConfig(contact_offset=0.0))
        self.assertEqual(len(result.ranked), 1)
        np.testing.assert_allclose(result.best.transform.translation, self.goal.translation, atol=1e-6)

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            InferConfig(K=0)
        with self.assertRaises(ConfigError):
            InferConfig(collision_margin=-0.1)

