import json
import math
import os
import shutil
import tempfile
import unittest
from io import StringIO
from pathlib import Path
from unittest.mock import patch

import numpy as np
import torch
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag

from dapstore.afford import make_schedule
from dapstore.env import gen_dataset, read_records, record_to_demo
from dapstore.exceptions import ConfigError, UsageError
from dapstore.labeling import MIN_CROP_POINTS, LabelConfig, label_affordance, label_correspondence
from .config import PathsConfig, flatten, load_config, unflatten
from .evaluation import summarize
from .models import EvaluationRun, TrainingRun
from .serializers import DatasetRecordSerializer, EvaluationReportSerializer, TrainingRunSerializer
from .training import TrainingOutcome, loss_windows, run_training

# Small networks and short runs for the command tests
TINY_CONFIG = {
    "schedule.T": 5,
    "denoiser": {"token_dim": 8, "num_layers": 1, "num_heads": 2, "fourier_freqs": 2,
                 "encoder_k": 4, "time_embed_dim": 8},
    "corr.token_dim": 8,
    "corr.num_blocks": 1,
    "corr.gva_k": 4,
    "corr.gva_groups": 2,
    "corr.encoder_k": 4,
    "train.steps": 3,
    "eval.episodes": 2,
    "eval.coverage_samples": 3,
    "infer.K": 2,
}

REPORT_KEYS = {
    "mode", "task", "episodes", "success_rate", "mode_coverage", "mode_histogram", "multi_mode_fraction",
    "multimodality", "mean_pos_error", "mean_rot_error", "failures", "results", "success_criterion", "config",
}


def run_command(name, *args):
    """Run a management command and parse its single stdout line"""
    out = StringIO()
    call_command(name, *args, stdout=out, stderr=StringIO())
    lines = out.getvalue().splitlines()
    assert len(lines) == 1, lines
    return json.loads(lines[0])


def command_error(name, *args) -> CommandError:
    try:
        call_command(name, *args, stdout=StringIO(), stderr=StringIO())
    except CommandError as e:
        return e
    raise AssertionError(f"{name} did not fail")


class LoadConfigTestCase(SimpleTestCase):
    """Test cases for load_config"""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp)

    def write_config(self, data):
        path = self.tmp / "config.json"
        path.write_text(json.dumps(data))
        return path

    def test_defaults(self):
        cfg = load_config(overrides={"task": "shelf"}, out=self.tmp)
        self.assertEqual(cfg.seed, 0)
        self.assertEqual(cfg.schedule.T, 100)
        self.assertEqual(cfg.schedule.build().T, 100)
        self.assertEqual(cfg.denoiser.token_dim, 64)
        self.assertEqual(cfg.corr.gva_k, 8)
        self.assertEqual(cfg.infer.K, 8)
        self.assertEqual(cfg.infer.contact_offset, 0.0)
        self.assertEqual(cfg.infer.match_threshold, cfg.corr.match_threshold)
        self.assertEqual(cfg.label.eps_place, 0.04)
        self.assertEqual(cfg.train.steps, 3000)
        self.assertEqual(cfg.eval.episodes, 50)
        self.assertEqual(cfg.paths.dataset, self.tmp / "dataset.jsonl")
        self.assertEqual(cfg.paths.checkpoint("corr"), self.tmp / "checkpoints" / "corr.ckpt")
        self.assertEqual(cfg.paths.report("dap"), self.tmp / "reports" / "eval_dap.json")

    def test_precedence(self):
        """Flags override the file, the file overrides the defaults"""
        path = self.write_config({"task": "cabinet", "schedule.T": 50, "train": {"steps": 10}})
        cfg = load_config(path, {"schedule.T": "20", "seed": 7, "train.lr": None}, out=self.tmp)
        self.assertEqual(cfg.task, "cabinet")
        self.assertEqual(cfg.schedule.T, 20)
        self.assertEqual(cfg.train.steps, 10)
        self.assertEqual(cfg.train.lr, 1e-3)
        self.assertEqual(cfg.seed, 7)

    def test_explicit_paths_are_kept(self):
        cfg = load_config(overrides={"task": "shelf", "paths.dataset": "/data/shelf.jsonl"}, out=self.tmp)
        self.assertEqual(cfg.paths.dataset, Path("/data/shelf.jsonl"))
        self.assertEqual(cfg.paths.checkpoints, self.tmp / "checkpoints")

    def test_missing_task(self):
        with self.assertRaises(UsageError):
            load_config(overrides={"seed": 1}, out=self.tmp)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError):
            load_config(overrides={"task": "shelf", "schedule.steps": 5})

    def test_invalid_values(self):
        for overrides in ({"denoiser.token_dim": 10}, {"schedule.beta_end": 1.5}, {"seed": 2 ** 64},
                          {"corr.gva_groups": 3}, {"infer.K": 0}, {"label.crop_scale_min": 0.5}):
            with self.subTest(overrides=overrides), self.assertRaises(ConfigError):
                load_config(overrides={"task": "shelf", **overrides}, out=self.tmp)

    def test_neighbourhood_larger_than_smallest_crop(self):
        """A demo crop may keep only MIN_CROP_POINTS points, corr neighbourhoods must fit in it"""
        for key in ("corr.gva_k", "corr.encoder_k"):
            with self.subTest(key=key), self.assertRaisesRegex(ConfigError, "must not exceed"):
                load_config(overrides={"task": "shelf", key: MIN_CROP_POINTS + 1}, out=self.tmp)
        cfg = load_config(overrides={"task": "shelf", "corr.gva_k": MIN_CROP_POINTS}, out=self.tmp)
        self.assertEqual(cfg.corr.min_points, MIN_CROP_POINTS)

    def test_largest_seed(self):
        cfg = load_config(overrides={"task": "shelf", "seed": 2 ** 64 - 1}, out=self.tmp)
        self.assertEqual(cfg.seed, 2 ** 64 - 1)

    def test_invalid_file(self):
        path = self.tmp / "config.json"
        path.write_text("{not json")
        with self.assertRaises(ConfigError):
            load_config(path, {"task": "shelf"})
        path.write_text("[1, 2]")
        with self.assertRaises(ConfigError):
            load_config(path, {"task": "shelf"})

    def test_effective_config_reloads(self):
        """The echoed configuration is itself a valid config file"""
        cfg = load_config(overrides={"task": "shelf", "seed": 3, "corr.gamma": 1.5}, out=self.tmp)
        again = load_config(self.write_config(cfg.to_dict()))
        self.assertEqual(again.to_dict(), cfg.to_dict())
        self.assertNotIn("match_threshold", cfg.to_dict()["infer"])

    def test_flatten_unflatten(self):
        flat = flatten({"task": "shelf", "schedule": {"T": 5}, "corr.gamma": 1.0})
        self.assertEqual(flat, {"task": "shelf", "schedule.T": 5, "corr.gamma": 1.0})
        nested = unflatten(flat)
        self.assertEqual(nested["schedule"], {"T": 5})
        self.assertEqual(nested["corr"], {"gamma": 1.0})
        self.assertEqual(nested["label"], {})

    def test_paths_under(self):
        paths = PathsConfig.under("/runs/a")
        self.assertEqual(paths.training_log("afford"), Path("/runs/a/checkpoints/afford.log.jsonl"))


class RecordSerializerTestCase(SimpleTestCase):
    """Test cases for the dataset record schema"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = Path(tempfile.mkdtemp())
        gen_dataset("shelf", 1, 1, 5, cls.tmp / "data.jsonl")
        cls.record = read_records(cls.tmp / "data.jsonl")[0]

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)
        super().tearDownClass()

    def test_generated_record_is_valid(self):
        self.assertTrue(DatasetRecordSerializer(data=self.record).is_valid())

    def test_bad_cloud(self):
        record = json.loads(json.dumps(self.record))
        record["object"]["positions"] = [[0.0, 1.0]] * len(record["object"]["normals"])
        serializer = DatasetRecordSerializer(data=record)
        self.assertFalse(serializer.is_valid())
        self.assertIn("object", serializer.errors)

    def test_count_mismatch(self):
        record = json.loads(json.dumps(self.record))
        record["container"]["normals"] = record["container"]["normals"][:-1]
        self.assertFalse(DatasetRecordSerializer(data=record).is_valid())

    def test_bad_goal(self):
        record = json.loads(json.dumps(self.record))
        record["goal"]["rotation"] = [1.0, 0.0, 0.0]
        self.assertFalse(DatasetRecordSerializer(data=record).is_valid())


class TrainingHelpersTestCase(TestCase):
    """Test cases for loss windows and the training ledger"""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp)
        self.cfg = load_config(overrides={"task": "shelf", "seed": 4}, out=self.tmp)

    def test_loss_windows(self):
        self.assertEqual(loss_windows([4.0] * 100 + [2.0] * 50 + [1.0] * 100), (4.0, 1.0))
        self.assertEqual(loss_windows([3.0, 2.0, 1.0]), (2.0, 2.0))

    @patch('dapstore.pipeline.training.train')
    def test_completed_run(self, mock_train):
        mock_train.return_value = TrainingOutcome(
            "afford", 200, 1.0, 0.25, self.tmp / "afford.ckpt", self.tmp / "afford.log.jsonl")
        run = run_training("afford", self.cfg)
        run.refresh_from_db()
        self.assertEqual(run.status, 'completed')
        self.assertIsNotNone(run.completed_at)
        self.assertEqual(run.final_loss, 0.25)
        self.assertEqual(run.config["seed"], 4)
        data = TrainingRunSerializer(run).data
        self.assertTrue(data["converged"])
        self.assertEqual(data["checkpoint_path"], str(self.tmp / "afford.ckpt"))

    @patch('dapstore.pipeline.training.train')
    def test_error_marks_run_failed(self, mock_train):
        mock_train.side_effect = ConfigError("boom")
        with self.assertRaises(ConfigError):
            run_training("corr", self.cfg)
        run = TrainingRun.objects.get(which='corr')
        self.assertEqual(run.status, 'failed')
        self.assertIn("boom", run.failure_reason)


class SummarizeTestCase(SimpleTestCase):
    """Test cases for report aggregation"""

    def entry(self, index, success, mode, modes=(), failures=None, placed=True):
        return {
            "episode": index, "success": success, "matched_mode": mode if success else None,
            "nearest_mode": mode if placed else None, "collision_points": 0 if placed else None,
            "pos_error": 0.01 if placed else None, "rot_error": 0.1 if placed else None,
            "rank_size": 2 if placed else 0, "positive_modes": list(modes), "failures": failures or {},
        }

    def test_aggregates(self):
        cfg = load_config(overrides={"task": "shelf"})
        results = [
            self.entry(0, True, 1, modes=[1]),
            self.entry(1, True, 3, modes=[1, 3]),
            self.entry(2, False, 2, failures={"empty_crop": 1}),
            self.entry(3, False, None, failures={"insufficient_matches": 2}, placed=False),
        ]
        coverage = {"samples": 4, "dominant_counts": {"0": 1, "1": 1, "2": 1, "3": 0}, "no_mode": 1,
                    "single_slot_fraction": 0.75}
        report = summarize("dap", cfg, results, 4, coverage)
        self.assertEqual(set(report), REPORT_KEYS)
        self.assertEqual(report["multimodality"], coverage)
        self.assertEqual(report["success_rate"], 0.5)
        self.assertEqual(report["mode_histogram"], {"0": 0, "1": 1, "2": 0, "3": 1})
        self.assertEqual(report["mode_coverage"], 0.5)
        self.assertEqual(report["multi_mode_fraction"], 0.25)
        self.assertAlmostEqual(report["mean_pos_error"], 0.01)
        self.assertEqual(report["failures"], {"empty_crop": 1, "insufficient_matches": 2, "no_candidates": 1})
        self.assertTrue(EvaluationReportSerializer(data=report).is_valid())

    def test_schema_rejects_missing_results(self):
        cfg = load_config(overrides={"task": "shelf"})
        report = summarize("cap", cfg, [self.entry(0, False, 0)], 4)
        self.assertIsNone(report["multimodality"])
        self.assertTrue(EvaluationReportSerializer(data=report).is_valid())
        report["episodes"] = 2
        self.assertFalse(EvaluationReportSerializer(data=report).is_valid())


class GenDataCommandTestCase(TestCase):
    """Test cases for the gen_data command"""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp)

    def test_writes_dataset(self):
        summary = run_command('gen_data', '--task', 'shelf', '--scenes', '2', '--demos', '2', '--seed', '7',
                              '--out', str(self.tmp))
        self.assertEqual(summary["records"], 4)
        self.assertEqual(summary["path"], str(self.tmp / "dataset.jsonl"))
        self.assertGreater(summary["fraction_positive"], 0.0)
        self.assertEqual(len(read_records(self.tmp / "dataset.jsonl")), 4)

    def test_config_file(self):
        config = self.tmp / "config.json"
        config.write_text(json.dumps({"task": "cabinet", "dataset.scenes": 1, "dataset.demos": 1}))
        summary = run_command('gen_data', '--config', str(config), '--out', str(self.tmp))
        self.assertEqual(summary["kind"], "cabinet")
        self.assertEqual(summary["records"], 1)

    def test_missing_task(self):
        error = command_error('gen_data', '--scenes', '1', '--out', str(self.tmp))
        self.assertEqual(error.returncode, 1)
        self.assertIn("task", str(error))

    def test_unknown_task(self):
        self.assertEqual(command_error('gen_data', '--task', 'drawer').returncode, 1)

    def test_invalid_config(self):
        error = command_error('gen_data', '--task', 'shelf', '--dataset.slot_count', '1', '--out', str(self.tmp))
        self.assertEqual(error.returncode, 2)

    def test_unwritable_output(self):
        blocker = self.tmp / "blocker.txt"
        blocker.write_text("")
        error = command_error('gen_data', '--task', 'shelf', '--scenes', '1', '--demos', '1',
                              '--paths.dataset', str(blocker / "dataset.jsonl"))
        self.assertEqual(error.returncode, 2)
        self.assertIn("blocker.txt", str(error))


class PipelineCommandTestCase(TestCase):
    """Test cases for the training, evaluation and inference commands on a tiny dataset"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = Path(tempfile.mkdtemp())
        cls.config = cls.tmp / "config.json"
        cls.config.write_text(json.dumps({"task": "shelf", "seed": 11, **TINY_CONFIG}))
        gen_dataset("shelf", 1, 2, 11, cls.tmp / "dataset.jsonl")

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)
        super().tearDownClass()

    def args(self, *extra):
        return ('--config', str(self.config), '--out', str(self.tmp), *extra)

    def train(self, which):
        """Three steps never halve the loss, so the run ends with exit code 3"""
        return command_error(f'train_{which}', *self.args())

    def test_train_writes_checkpoint_and_log(self):
        for which in ("afford", "cap", "corr"):
            with self.subTest(which=which):
                error = self.train(which)
                self.assertEqual(error.returncode, 3)
                self.assertIn("convergence", str(error))
                self.assertTrue((self.tmp / "checkpoints" / f"{which}.ckpt").exists())
                log = [json.loads(line) for line in
                       (self.tmp / "checkpoints" / f"{which}.log.jsonl").read_text().splitlines()]
                self.assertEqual([entry["step"] for entry in log], [1, 2, 3])
                self.assertEqual(set(log[0]), {"step", "loss", "wall_ms"})
                self.assertTrue(all(np.isfinite(entry["loss"]) for entry in log))

                run = TrainingRun.objects.get(which=which)
                self.assertEqual(run.status, 'failed')
                self.assertIn("did not converge", run.failure_reason)
                self.assertEqual(run.steps, 3)
                self.assertFalse(run.converged)

    def test_train_is_deterministic(self):
        self.train("corr")
        first = (self.tmp / "checkpoints" / "corr.ckpt").read_bytes()
        self.train("corr")
        self.assertEqual((self.tmp / "checkpoints" / "corr.ckpt").read_bytes(), first)

    def test_missing_dataset(self):
        error = command_error('train_afford', *self.args('--paths.dataset', str(self.tmp / "nowhere.jsonl")))
        self.assertEqual(error.returncode, 2)
        self.assertIn("nowhere.jsonl", str(error))

    def test_eval_reports(self):
        for which in ("afford", "cap", "corr"):
            self.train(which)
        for mode in ("dap", "cap"):
            with self.subTest(mode=mode):
                summary = run_command('eval', *self.args('--mode', mode))
                self.assertEqual(summary["status"], 'completed')
                self.assertEqual(summary["episodes"], 2)
                path = self.tmp / "reports" / f"eval_{mode}.json"
                self.assertEqual(summary["report_path"], str(path))

                first = path.read_bytes()
                report = json.loads(first)
                self.assertEqual(set(report), REPORT_KEYS)
                self.assertEqual(report["mode"], mode)
                self.assertEqual(len(report["results"]), 2)
                self.assertEqual(report["config"]["seed"], 11)
                if mode == "dap":
                    coverage = report["multimodality"]
                    self.assertEqual(coverage["samples"], 3)
                    self.assertEqual(sum(coverage["dominant_counts"].values()) + coverage["no_mode"], 3)
                else:
                    self.assertIsNone(report["multimodality"])
                self.assertTrue(EvaluationReportSerializer(data=report).is_valid())

                run_command('eval', *self.args('--mode', mode))
                self.assertEqual(path.read_bytes(), first)
        self.assertEqual(EvaluationRun.objects.filter(status='completed').count(), 4)

    def test_eval_missing_checkpoint(self):
        error = command_error('eval', *self.args('--paths.checkpoints', str(self.tmp / "empty")))
        self.assertEqual(error.returncode, 2)
        self.assertEqual(EvaluationRun.objects.get().status, 'failed')


class OracleAfford:
    """Noise prediction that steers every sample to the demonstration labels"""

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


class InferCommandTestCase(TestCase):
    """Test cases for the infer command with oracle models"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = Path(tempfile.mkdtemp())
        gen_dataset("shelf", 1, 1, 21, cls.tmp / "dataset.jsonl")
        cls.scene = cls.tmp / "scene.json"
        cls.scene.write_text((cls.tmp / "dataset.jsonl").read_text().splitlines()[0])
        cls.demo = record_to_demo(read_records(cls.tmp / "dataset.jsonl")[0])

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)
        super().tearDownClass()

    def setUp(self):
        sched = make_schedule(5, 1e-4, 0.02)
        labels = label_affordance(self.demo, LabelConfig())
        models = {"afford": OracleAfford(labels.scores, sched), "corr": OracleCorr(self.demo.goal, LabelConfig())}
        patcher = patch('dapstore.pipeline.management.commands.infer.load_trained',
                        side_effect=lambda which, cfg: models[which])
        patcher.start()
        self.addCleanup(patcher.stop)

    def infer(self, *extra):
        return run_command('infer', '--task', 'shelf', '--seed', '3', '--schedule.T', '5', '--infer.K', '3',
                           '--out', str(self.tmp), '--scene', str(self.scene), *extra)

    def test_prints_pose(self):
        result = self.infer()
        rotation = np.array(result["rotation"]).reshape(3, 3)
        np.testing.assert_allclose(rotation.T @ rotation, np.eye(3), atol=1e-9)
        self.assertAlmostEqual(float(np.linalg.det(rotation)), 1.0, places=9)
        self.assertEqual(len(result["translation"]), 3)
        self.assertEqual(result["rank_size"], 3)
        self.assertGreaterEqual(result["collisions"], 0)
        placed = self.demo.object.positions @ rotation.T + np.array(result["translation"])
        goal = self.demo.goal.apply_points(self.demo.object.positions)
        self.assertLess(np.linalg.norm(placed.mean(axis=0) - goal.mean(axis=0)), 0.05)

    def test_same_seed_same_output(self):
        self.assertEqual(self.infer(), self.infer())

    def test_trajectory_export(self):
        directory = self.tmp / "trajectory"
        result = self.infer('--export-trajectory', str(directory))
        self.assertEqual(result["trajectory_files"], 6)
        self.assertEqual(len(list(directory.glob("afford_t*.ply"))), 6)
        self.assertTrue((directory / "afford_t005.ply").exists())
        self.assertTrue((directory / "afford_t000.ply").exists())

    def test_bare_clouds(self):
        bare = self.tmp / "bare.json"
        record = json.loads(self.scene.read_text())
        bare.write_text(json.dumps({"container": record["container"], "object": record["object"]}, indent=2))
        result = run_command('infer', '--task', 'shelf', '--schedule.T', '5', '--infer.K', '1',
                             '--out', str(self.tmp), '--scene', str(bare))
        self.assertEqual(result["rank_size"], 1)

    def test_malformed_scene(self):
        bad = self.tmp / "bad.json"
        bad.write_text(json.dumps({"container": {"positions": [[0, 0]], "normals": [[0, 0, 1]]}}))
        error = command_error('infer', '--task', 'shelf', '--out', str(self.tmp), '--scene', str(bad))
        self.assertEqual(error.returncode, 2)

    def test_missing_scene_flag(self):
        self.assertEqual(command_error('infer', '--task', 'shelf').returncode, 1)


@tag("slow")
@unittest.skipUnless(os.getenv("DAP_ACCEPTANCE") == "1", "set DAP_ACCEPTANCE=1 to run the learning acceptance runs")
class AcceptanceTestCase(TestCase):
    """End-to-end learning runs at the default configuration"""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp)

    def pipeline(self, task, *extra):
        base = ('--task', task, '--seed', '7', '--out', str(self.tmp), *extra)
        run_command('gen_data', *base, '--scenes', '50', '--demos', '4')
        afford = run_command('train_afford', *base)
        self.assertTrue(afford["converged"])
        run_command('train_corr', *base)
        return base

    def report(self, mode):
        return json.loads((self.tmp / "reports" / f"eval_{mode}.json").read_text())

    def test_shelf_dap_beats_cap(self):
        base = self.pipeline('shelf')
        run_command('eval', *base, '--mode', 'dap')
        dap = self.report('dap')
        self.assertGreaterEqual(dap["success_rate"], 0.80)
        coverage = dap["multimodality"]
        self.assertEqual(coverage["samples"], 64)
        self.assertEqual(len(coverage["dominant_counts"]), 4)
        for slot, count in coverage["dominant_counts"].items():
            self.assertGreaterEqual(count, 5, f"slot {slot}")
        self.assertGreaterEqual(coverage["single_slot_fraction"], 0.90)

        run_command('train_cap', *base)
        run_command('eval', *base, '--mode', 'cap')
        cap = self.report('cap')
        self.assertLessEqual(cap["success_rate"], dap["success_rate"] - 0.20)
        self.assertGreaterEqual(cap["multi_mode_fraction"], 0.80)

    def test_cabinet_dap(self):
        base = self.pipeline('cabinet')
        run_command('eval', *base, '--mode', 'dap')
        self.assertGreaterEqual(self.report('dap')["success_rate"], 0.70)

    def test_corr_overfits_one_record(self):
        base = ('--task', 'shelf', '--seed', '7', '--out', str(self.tmp))
        run_command('gen_data', *base, '--scenes', '1', '--demos', '1')
        run_command('train_corr', *base, '--train.steps', '2000')
        log = (self.tmp / "checkpoints" / "corr.log.jsonl").read_text().splitlines()
        final = np.mean([json.loads(line)["loss"] for line in log[-100:]])
        self.assertLess(final, 0.05)
