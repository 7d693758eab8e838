"""
Dataset records: one JSON object per demonstration, one per line.

    {"container": {"positions": [[x, y, z], ...], "normals": [...]},
     "object": {...},
     "goal": {"rotation": [9 row-major], "translation": [3]},
     "mode_id": int,
     "scene_meta": {"kind": str, "slot_count": int, "seed": int}}
"""
import json
import logging
from pathlib import Path

import numpy as np
from django.core.serializers.json import DjangoJSONEncoder

from dapstore.exceptions import FormatError
from dapstore.geom import PointCloud, RigidTransform
from dapstore.labeling import Demonstration, LabelConfig, label_affordance
from dapstore.utils import derive_seed, parallel_map
from .demos import sample_demonstration
from .scenes import cluster_scene, gen_scene

logger = logging.getLogger(__name__)


def cloud_to_dict(pc: PointCloud) -> dict:
    return {"positions": pc.positions.tolist(), "normals": pc.normals.tolist()}


def cloud_from_dict(data: dict) -> PointCloud:
    return PointCloud(np.asarray(data["positions"], dtype=np.float64).reshape(-1, 3),
                      np.asarray(data["normals"], dtype=np.float64).reshape(-1, 3))


def demo_to_record(demo: Demonstration, meta: dict) -> dict:
    return {
        "container": cloud_to_dict(demo.container),
        "object": cloud_to_dict(demo.object),
        "goal": demo.goal.to_dict(),
        "mode_id": demo.mode_id,
        "scene_meta": dict(meta),
    }


def record_to_demo(record: dict) -> Demonstration:
    """
    Raises:
        FormatError: missing keys or malformed clouds/transforms
    """
    try:
        return Demonstration(cloud_from_dict(record["container"]), cloud_from_dict(record["object"]),
                             RigidTransform.from_dict(record["goal"]), record.get("mode_id"))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"malformed dataset record: {e}")


def dumps_record(record: dict) -> str:
    return json.dumps(record, cls=DjangoJSONEncoder, sort_keys=True)


def read_records(path) -> list:
    """
    Parse a JSON-lines file, skipping blank lines.

    Raises:
        FormatError: a line is not a JSON object
    """
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{number}: invalid JSON ({e.msg})")
            if not isinstance(record, dict):
                raise FormatError(f"{path}:{number}: expected a JSON object")
            records.append(record)
    return records


def _scene_records(kind, scene_index, demos_per_scene, rng_seed, slot_count, label_cfg,
                   container_voxel, object_voxel):
    scene = gen_scene(kind, derive_seed(rng_seed, scene_index), slot_count, label_cfg.eps_corr)
    scene = cluster_scene(scene, container_voxel, object_voxel)
    records, fractions = [], []
    for demo_index in range(demos_per_scene):
        demo = sample_demonstration(scene, derive_seed(rng_seed, scene_index, demo_index))
        fractions.append(label_affordance(demo, label_cfg).fraction_positive)
        records.append(demo_to_record(demo, {**scene.meta(), "scene_index": scene_index}))
    return records, fractions


def gen_dataset(kind: str, n_scenes: int, demos_per_scene: int, rng_seed: int, out_path,
                slot_count: int = 4, label_cfg: LabelConfig = LabelConfig(),
                container_voxel: float = 0.03, object_voxel: float = 0.015, max_workers: int = 1) -> dict:
    """
    Generate n_scenes x demos_per_scene clustered demonstrations and write them
    to out_path as JSON lines. Scene i is seeded derive_seed(seed, i), its demo
    j derive_seed(seed, i, j), so the file depends only on the arguments.

    Returns:
        dict: summary with the record count and label statistics
    """
    out_path = Path(out_path)
    scenes = parallel_map(
        lambda i: _scene_records(kind, i, demos_per_scene, rng_seed, slot_count, label_cfg,
                                 container_voxel, object_voxel),
        range(n_scenes), max_workers=max_workers)

    out_path.parent.mkdir(parents=True, exist_ok=True)
    fractions = []
    count = 0
    with open(out_path, "w", encoding="utf-8") as handle:
        for records, scene_fractions in scenes:
            for record in records:
                handle.write(dumps_record(record) + "\n")
                count += 1
            fractions.extend(scene_fractions)

    summary = {
        "kind": kind,
        "path": str(out_path),
        "records": count,
        "scenes": n_scenes,
        "demos_per_scene": demos_per_scene,
        "fraction_positive": float(np.mean(fractions)) if fractions else 0.0,
        "fraction_positive_min": float(np.min(fractions)) if fractions else 0.0,
    }
    logger.info(f"Wrote {count} {kind} records to {out_path}")
    return summary
