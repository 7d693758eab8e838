import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag
from scipy.spatial.distance import cdist

from dapstore.exceptions import ConfigError, FormatError
from dapstore.geom import RigidTransform, apply_transform, compose, translation_distance
from dapstore.labeling import AffordanceField, LabelConfig, label_affordance, label_correspondence
from dapstore.pose import collision_count
from dapstore.utils import derive_seed
from .demos import sample_demonstration
from .evaluation import (
    coverage_summary,
    dominant_mode,
    evaluate_placement,
    positive_modes,
    slot_regions,
    symmetric_rotation_error,
)
from .records import gen_dataset, read_records, record_to_demo
from .scenes import CabinetParams, ShelfParams, cluster_scene, gen_cabinet_scene, gen_scene, gen_shelf_scene


class ShelfSceneTestCase(SimpleTestCase):
    """Test cases for gen_shelf_scene"""

    def test_equal_spacing_without_jitter(self):
        scene = gen_shelf_scene(7, ShelfParams(slot_count=4, jitter=0.0))
        xs = np.array([pose.translation[0] for pose in scene.slot_poses])
        self.assertEqual(len(xs), 4)
        np.testing.assert_allclose(np.diff(xs), np.full(3, np.diff(xs)[0]), atol=1e-12)
        self.assertAlmostEqual(float(xs.mean()), 0.0, places=12)

    def test_slots_share_one_level(self):
        """Slots differ only in x, one row between dividers"""
        scene = gen_shelf_scene(10, ShelfParams(slot_count=5))
        heights = np.array([pose.translation[1:] for pose in scene.slot_poses])
        np.testing.assert_array_equal(heights, np.tile(heights[0], (5, 1)))

    def test_every_slot_is_labelable(self):
        scene = cluster_scene(gen_shelf_scene(8))
        cfg = LabelConfig()
        for region in slot_regions(scene, cfg):
            self.assertGreaterEqual(int(region.sum()), 10)

    def test_every_slot_is_collision_free(self):
        raw = gen_shelf_scene(9)
        for scene in (raw, cluster_scene(raw)):
            for slot in scene.slot_poses:
                self.assertEqual(collision_count(scene.container, apply_transform(scene.object_template, slot), 0.0), 0)

    def test_seeds_change_gaps(self):
        a = gen_shelf_scene(1)
        b = gen_shelf_scene(2)
        xa = [pose.translation[0] for pose in a.slot_poses]
        xb = [pose.translation[0] for pose in b.slot_poses]
        self.assertFalse(np.allclose(xa, xb))
        a.check()
        b.check()

    def test_infeasible_parameters(self):
        with self.assertRaises(ConfigError):
            gen_shelf_scene(0, ShelfParams(slot_gap=0.08))
        with self.assertRaises(ConfigError):
            gen_shelf_scene(0, ShelfParams(slot_count=1))

    def test_container_sample_count(self):
        self.assertEqual(len(gen_shelf_scene(3).container), 3000)


class CabinetSceneTestCase(SimpleTestCase):
    """Test cases for gen_cabinet_scene"""

    def test_slot_grid(self):
        scene = gen_cabinet_scene(4, CabinetParams(levels=2, positions=2))
        self.assertEqual(scene.slot_count, 4)
        self.assertEqual(scene.symmetry, "yaw")

    def test_slots_are_collision_free(self):
        scene = cluster_scene(gen_cabinet_scene(5))
        for slot in scene.slot_poses:
            self.assertEqual(collision_count(scene.container, apply_transform(scene.object_template, slot), 0.0), 0)

    def test_invariants_over_many_seeds(self):
        for seed in range(100):
            scene = gen_cabinet_scene(seed, CabinetParams(levels=2 + seed % 2, positions=2))
            scene.check()
            self.assertGreaterEqual(len(scene.container), 400)
            for slot in scene.slot_poses:
                placed = apply_transform(scene.object_template, slot)
                self.assertEqual(collision_count(scene.container, placed, 0.0), 0)

    def test_gen_scene_dispatch(self):
        self.assertEqual(gen_scene("cabinet", 0, 4).slot_count, 4)
        self.assertEqual(gen_scene("shelf", 0, 3).slot_count, 3)
        with self.assertRaises(ConfigError):
            gen_scene("drawer", 0)


class SampleDemonstrationTestCase(SimpleTestCase):
    """Test cases for sample_demonstration"""

    def setUp(self):
        self.scene = cluster_scene(gen_shelf_scene(11))

    def test_zero_jitter_goal_is_slot(self):
        demo = sample_demonstration(self.scene, 3, jitter=False, random_init=False)
        slot = self.scene.slot_poses[demo.mode_id]
        np.testing.assert_array_equal(demo.goal.rotation, slot.rotation)
        np.testing.assert_array_equal(demo.goal.translation, slot.translation)

    def test_random_init_reaches_slot(self):
        demo = sample_demonstration(self.scene, 4, jitter=False)
        slot = self.scene.slot_poses[demo.mode_id]
        np.testing.assert_allclose(demo.placed_object().positions,
                                   slot.apply_points(self.scene.object_template.positions), atol=1e-12)
        self.assertGreater(demo.object.positions[:, 1].min(), 0.25)

    def test_jitter_stays_within_tolerance(self):
        for seed in range(50):
            demo = sample_demonstration(self.scene, seed, random_init=False)
            slot = self.scene.slot_poses[demo.mode_id]
            self.assertLessEqual(np.linalg.norm(demo.goal.translation - slot.translation), self.scene.pos_tol / 2)
            self.assertLessEqual(symmetric_rotation_error(slot.rotation, demo.goal.rotation),
                                 self.scene.rot_tol / 2 + 1e-12)

    def test_mode_frequencies(self):
        counts = np.zeros(4)
        for seed in range(1000):
            counts[sample_demonstration(self.scene, seed, random_init=False).mode_id] += 1
        frequencies = counts / 1000
        self.assertTrue(np.all(frequencies >= 0.15) and np.all(frequencies <= 0.35), frequencies)

    def test_demos_have_positive_labels(self):
        cabinet = cluster_scene(gen_cabinet_scene(12))
        for scene in (self.scene, cabinet):
            for seed in range(10):
                demo = sample_demonstration(scene, seed)
                self.assertGreaterEqual(int(np.sum(label_affordance(demo, LabelConfig()).scores > 0)), 10)
                placed = demo.placed_object()
                self.assertEqual(collision_count(scene.container, placed, 0.0), 0)


class EvaluatePlacementTestCase(SimpleTestCase):
    """Test cases for evaluate_placement"""

    def setUp(self):
        self.shelf = cluster_scene(gen_shelf_scene(21))
        self.cabinet = cluster_scene(gen_cabinet_scene(22))

    def test_exact_slot(self):
        slot = self.shelf.slot_poses[2]
        result = evaluate_placement(self.shelf, slot, self.shelf.object_template)
        self.assertTrue(result.success)
        self.assertEqual(result.matched_mode, 2)
        self.assertEqual(result.collision_points, 0)
        self.assertLess(result.pos_error, 1e-9)
        self.assertLess(result.rot_error, 1e-6)

    def test_pos_error_is_slot_distance(self):
        slot = self.shelf.slot_poses[2]
        shifted = RigidTransform(slot.rotation, slot.translation + [0.003, 0.004, 0.0])
        result = evaluate_placement(self.shelf, shifted, self.shelf.object_template)
        self.assertEqual(result.matched_mode, 2)
        self.assertAlmostEqual(result.pos_error, translation_distance(shifted, slot), places=9)
        self.assertAlmostEqual(result.pos_error, 0.005, places=9)

    def test_far_offset(self):
        slot = self.shelf.slot_poses[1]
        offset = RigidTransform(slot.rotation, slot.translation + [0.0, 0.0, 10 * self.shelf.pos_tol])
        result = evaluate_placement(self.shelf, offset, self.shelf.object_template)
        self.assertFalse(result.success)
        self.assertIsNone(result.matched_mode)

    def test_cylinder_yaw_symmetry(self):
        for yaw in (0.4, 1.3, 2.9):
            slot = self.cabinet.slot_poses[3]
            result = evaluate_placement(self.cabinet, compose(slot, RigidTransform.from_yaw(yaw)),
                                        self.cabinet.object_template)
            self.assertTrue(result.success, result)
            self.assertEqual(result.matched_mode, 3)

    def test_box_half_turn(self):
        slot = self.shelf.slot_poses[0]
        result = evaluate_placement(self.shelf, compose(slot, RigidTransform.from_yaw(np.pi)),
                                    self.shelf.object_template)
        self.assertTrue(result.success, result)
        self.assertLess(result.rot_error, 1e-6)

    def test_box_quarter_turn_fails(self):
        slot = self.shelf.slot_poses[0]
        result = evaluate_placement(self.shelf, compose(slot, RigidTransform.from_yaw(np.pi / 2)),
                                    self.shelf.object_template)
        self.assertFalse(result.success)
        self.assertIsNone(result.matched_mode)

    def test_moved_object(self):
        """The object's own pose is recovered before comparing with the slots"""
        demo = sample_demonstration(self.cabinet, 5, jitter=False)
        result = evaluate_placement(self.cabinet, demo.goal, demo.object)
        self.assertTrue(result.success, result)
        self.assertEqual(result.matched_mode, demo.mode_id)

    def test_collision_blocks_success(self):
        slot = self.shelf.slot_poses[1]
        sunk = RigidTransform(slot.rotation, slot.translation - [0.0, 0.0, 0.015])
        result = evaluate_placement(self.shelf, sunk, self.shelf.object_template)
        self.assertGreater(result.collision_points, 0)
        self.assertEqual(result.matched_mode, 1)
        self.assertFalse(result.success)


class RotationErrorTestCase(SimpleTestCase):
    """Test cases for symmetric_rotation_error"""

    def test_groups(self):
        tilt = RigidTransform.from_rotvec([0.1, 0.0, 0.0]).rotation
        spin = RigidTransform.from_yaw(1.0).rotation
        self.assertAlmostEqual(symmetric_rotation_error(np.eye(3), spin, "none"), 1.0, places=12)
        self.assertAlmostEqual(symmetric_rotation_error(np.eye(3), spin @ tilt, "yaw"), 0.1, places=12)
        half = RigidTransform.from_yaw(np.pi - 0.05).rotation
        self.assertAlmostEqual(symmetric_rotation_error(np.eye(3), half, "yaw180"), 0.05, places=9)


class SlotRegionTestCase(SimpleTestCase):
    """Test cases for slot_regions, dominant_mode, positive_modes and coverage_summary"""

    def setUp(self):
        self.scene = cluster_scene(gen_shelf_scene(31))
        self.regions = slot_regions(self.scene)

    def test_single_slot_labels(self):
        demo = sample_demonstration(self.scene, 0, jitter=False, random_init=False)
        labels = label_affordance(demo, LabelConfig())
        self.assertEqual(dominant_mode(labels, self.regions), demo.mode_id)
        self.assertEqual(positive_modes(labels, self.regions), [demo.mode_id])

    def test_all_positive(self):
        field = AffordanceField(np.ones(len(self.scene.container)))
        self.assertEqual(positive_modes(field, self.regions), [0, 1, 2, 3])

    def test_all_negative(self):
        field = AffordanceField(-np.ones(len(self.scene.container)))
        self.assertIsNone(dominant_mode(field, self.regions))
        self.assertEqual(positive_modes(field, self.regions), [])

    def test_coverage_summary(self):
        """Dominant slots are counted per field, and all-positive fields are not single-slot"""
        n = len(self.scene.container)
        per_slot = [AffordanceField(np.where(region, 1.0, -1.0)) for region in self.regions]
        fields = per_slot + [per_slot[0], AffordanceField(-np.ones(n)), AffordanceField(np.ones(n))]
        summary = coverage_summary(fields, self.regions)
        self.assertEqual(summary["samples"], 7)
        self.assertEqual(summary["dominant_counts"], {"0": 3, "1": 1, "2": 1, "3": 1})
        self.assertEqual(summary["no_mode"], 1)
        self.assertAlmostEqual(summary["single_slot_fraction"], 5 / 7)


class GenDatasetTestCase(SimpleTestCase):
    """Test cases for gen_dataset"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_single_record(self):
        summary = gen_dataset("shelf", 1, 1, 7, self.root / "one.jsonl")
        self.assertEqual(summary["records"], 1)
        records = read_records(self.root / "one.jsonl")
        self.assertEqual(len(records), 1)
        self.assertEqual(set(records[0]), {"container", "object", "goal", "mode_id", "scene_meta"})
        self.assertEqual(records[0]["scene_meta"]["kind"], "shelf")
        self.assertEqual(len(records[0]["goal"]["rotation"]), 9)
        self.assertGreater(summary["fraction_positive"], 0.0)

    def test_records_match_label_oracles(self):
        gen_dataset("cabinet", 2, 2, 3, self.root / "cab.jsonl")
        cfg = LabelConfig()
        for record in read_records(self.root / "cab.jsonl"):
            demo = record_to_demo(record)
            placed = demo.placed_object().positions
            nearest = cdist(demo.container.positions, placed).min(axis=1)
            np.testing.assert_array_equal(label_affordance(demo, cfg).scores, np.where(nearest < cfg.eps_place, 1.0, -1.0))
            corr = label_correspondence(demo.container, demo.object, demo.goal, cfg)
            np.testing.assert_array_equal(corr.values, (cdist(placed, demo.container.positions) < cfg.eps_corr) * 1.0)

    def test_threads_do_not_change_output(self):
        gen_dataset("shelf", 4, 2, 5, self.root / "serial.jsonl")
        gen_dataset("shelf", 4, 2, 5, self.root / "threaded.jsonl", max_workers=3)
        self.assertEqual((self.root / "serial.jsonl").read_bytes(), (self.root / "threaded.jsonl").read_bytes())

    @tag("slow")
    def test_byte_identical_reruns(self):
        gen_dataset("shelf", 50, 4, 7, self.root / "a.jsonl")
        summary = gen_dataset("shelf", 50, 4, 7, self.root / "b.jsonl")
        self.assertEqual(summary["records"], 200)
        self.assertEqual((self.root / "a.jsonl").read_bytes(), (self.root / "b.jsonl").read_bytes())

    def test_malformed_lines(self):
        path = self.root / "bad.jsonl"
        path.write_text('{"mode_id": 1}\nnot json\n')
        with self.assertRaises(FormatError):
            read_records(path)
        with self.assertRaises(FormatError):
            record_to_demo({"mode_id": 1})

    def test_round_trip_preserves_demo(self):
        """Parsed records equal the regenerated demonstration exactly"""
        gen_dataset("shelf", 1, 1, 9, self.root / "rt.jsonl")
        loaded = record_to_demo(read_records(self.root / "rt.jsonl")[0])
        scene = cluster_scene(gen_scene("shelf", derive_seed(9, 0)))
        demo = sample_demonstration(scene, derive_seed(9, 0, 0))
        np.testing.assert_array_equal(loaded.container.positions, demo.container.positions)
        np.testing.assert_array_equal(loaded.object.normals, demo.object.normals)
        np.testing.assert_array_equal(loaded.goal.rotation, demo.goal.rotation)
        self.assertEqual(loaded.mode_id, demo.mode_id)
