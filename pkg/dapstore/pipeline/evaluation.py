"""
Held-out evaluation of the placement pipeline.

Episode i builds scene derive_seed(s, i) with s = seed + DAP_EVAL_SEED_OFFSET,
the same derivation the dataset uses with the plain seed, so evaluation
scenes never coincide with training scenes. ``dap`` ranks K diffusion
candidates; ``cap`` places from a single classification affordance.
"""
import json
import logging
from collections import Counter
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.serializers.json import DjangoJSONEncoder

from dapstore.afford import cap_predict, sample_affordance_batch
from dapstore.env import (
    SUCCESS_CRITERION,
    cluster_scene,
    coverage_summary,
    evaluate_placement,
    gen_scene,
    positive_modes,
    sample_demonstration,
    slot_regions,
)
from dapstore.exceptions import FormatError, NoCandidatesError
from dapstore.pose import cap_storage_pose, infer_storage_pose
from dapstore.utils import derive_seed, offset_seed
from .config import RunConfig
from .ledger import complete_run, mark_run_failed, start_run
from .models import EvaluationRun
from .serializers import EvaluationReportSerializer
from .training import load_trained

logger = logging.getLogger(__name__)

MODES = ("dap", "cap")


def eval_seed(cfg: RunConfig) -> int:
    return offset_seed(cfg.seed, settings.DAP_EVAL_SEED_OFFSET)


def held_out_episode(cfg: RunConfig, index: int):
    """(clustered scene, object cloud at a random initial pose) of episode index"""
    base = eval_seed(cfg)
    scene = gen_scene(cfg.task, derive_seed(base, index), cfg.dataset.slot_count, cfg.label.eps_corr)
    scene = cluster_scene(scene, cfg.dataset.container_voxel, cfg.dataset.object_voxel)
    demo = sample_demonstration(scene, derive_seed(base, index, 0))
    return scene, demo.object


def run_episode(mode: str, index: int, afford_model, corr_model, cfg: RunConfig, max_workers: int = 1) -> dict:
    scene, obj = held_out_episode(cfg, index)
    regions = slot_regions(scene, cfg.label)
    entry = {
        "episode": index,
        "success": False,
        "matched_mode": None,
        "nearest_mode": None,
        "collision_points": None,
        "pos_error": None,
        "rot_error": None,
        "rank_size": 0,
        "positive_modes": [],
        "failures": {},
    }

    cap_field = None
    if mode == "cap":
        cap_field = cap_predict(afford_model, scene.container)
        entry["positive_modes"] = positive_modes(cap_field, regions)
    try:
        if mode == "dap":
            result = infer_storage_pose(afford_model, corr_model, scene.container, obj, cfg.schedule.build(),
                                        derive_seed(eval_seed(cfg), index, 1), cfg.infer, max_workers)
            entry["positive_modes"] = positive_modes(result.best.affordance, regions)
        else:
            result = cap_storage_pose(afford_model, corr_model, scene.container, obj, cfg.infer, cap_field)
    except NoCandidatesError as e:
        entry["failures"] = dict(sorted(e.failure_counts().items()))
        logger.info(f"Episode {index}: no candidate survived ({e})")
        return entry

    placement = evaluate_placement(scene, result.best.transform, obj)
    entry.update(placement.to_dict())
    entry["rank_size"] = len(result.ranked)
    entry["failures"] = dict(sorted(Counter(tag for _, tag in result.failures).items()))
    logger.info(f"Episode {index}: {'success' if placement.success else 'failure'} near slot "
                f"{placement.nearest_mode} (pos {placement.pos_error:.4f} m, rot {placement.rot_error:.4f} rad, "
                f"{placement.collision_points} collisions)")
    return entry


def multimodality(afford_model, cfg: RunConfig, chunk: int = 8) -> dict:
    """
    Slot coverage of cfg.eval.coverage_samples affordance samples on held-out
    episode 0. Sample k is seeded s + k, drawn in batches of chunk.
    """
    scene, _ = held_out_episode(cfg, 0)
    regions = slot_regions(scene, cfg.label)
    sched = cfg.schedule.build()
    base = derive_seed(eval_seed(cfg), 0, 2)
    fields = []
    for start in range(0, cfg.eval.coverage_samples, chunk):
        count = min(chunk, cfg.eval.coverage_samples - start)
        batch = sample_affordance_batch(afford_model, scene.container, sched, offset_seed(base, start), count)
        fields.extend(sample.scores for sample in batch)
    summary = coverage_summary(fields, regions)
    logger.info(f"Slot coverage over {summary['samples']} samples: {summary['dominant_counts']}, "
                f"single-slot fraction {summary['single_slot_fraction']:.3f}")
    return summary


def summarize(mode: str, cfg: RunConfig, results: list, slot_count: int, coverage: dict = None) -> dict:
    """Aggregate per-episode entries into the report"""
    episodes = len(results)
    histogram = {str(slot): 0 for slot in range(slot_count)}
    failures = Counter()
    for entry in results:
        if entry["success"]:
            histogram[str(entry["matched_mode"])] += 1
        failures.update(entry["failures"])
        if entry["rank_size"] == 0:
            failures["no_candidates"] += 1

    placed = [entry for entry in results if entry["pos_error"] is not None]
    return {
        "mode": mode,
        "task": cfg.task,
        "episodes": episodes,
        "success_rate": sum(entry["success"] for entry in results) / episodes,
        "mode_coverage": sum(count > 0 for count in histogram.values()) / slot_count,
        "mode_histogram": histogram,
        "multi_mode_fraction": sum(len(entry["positive_modes"]) >= 2 for entry in results) / episodes,
        "multimodality": coverage,
        "mean_pos_error": float(np.mean([entry["pos_error"] for entry in placed])) if placed else None,
        "mean_rot_error": float(np.mean([entry["rot_error"] for entry in placed])) if placed else None,
        "failures": dict(sorted(failures.items())),
        "results": results,
        "success_criterion": SUCCESS_CRITERION,
        "config": cfg.to_dict(),
    }


def write_report(report: dict, path) -> Path:
    """
    Validate the report against its schema and write it with sorted keys.

    Raises:
        FormatError: the report does not match the schema
    """
    serializer = EvaluationReportSerializer(data=report)
    if not serializer.is_valid():
        raise FormatError(f"evaluation report does not match its schema: {serializer.errors}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, cls=DjangoJSONEncoder, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def evaluate(mode: str, cfg: RunConfig, max_workers: int = 1) -> dict:
    """
    Run cfg.eval.episodes held-out episodes with the trained checkpoints.

    Raises:
        FormatError, OSError: missing or unreadable checkpoints
    """
    afford_model = load_trained("afford" if mode == "dap" else "cap", cfg)
    corr_model = load_trained("corr", cfg)
    results = [run_episode(mode, index, afford_model, corr_model, cfg, max_workers)
               for index in range(cfg.eval.episodes)]
    slot_count = gen_scene(cfg.task, derive_seed(eval_seed(cfg), 0), cfg.dataset.slot_count,
                           cfg.label.eps_corr).slot_count
    coverage = multimodality(afford_model, cfg) if mode == "dap" else None
    report = summarize(mode, cfg, results, slot_count, coverage)
    logger.info(f"{mode} evaluation on {cfg.task}: success rate {report['success_rate']:.3f} "
                f"over {report['episodes']} episodes")
    return report


def run_evaluation(mode: str, cfg: RunConfig, max_workers: int = 1) -> EvaluationRun:
    """Evaluate under a ledger record and write the report to cfg.paths"""
    run = start_run(EvaluationRun, mode=mode, task=cfg.task, seed=str(cfg.seed), config=cfg.to_dict())
    try:
        report = evaluate(mode, cfg, max_workers)
        path = write_report(report, cfg.paths.report(mode))
    except Exception as e:
        mark_run_failed(run, f"{type(e).__name__}: {e}")
        raise
    return complete_run(run, episodes=report["episodes"], success_rate=report["success_rate"],
                        report_path=str(path))
