"""
Geometric success check for a predicted placement.

A placement succeeds when the object's resulting pose is within pos_tol and
rot_tol of some slot pose (rotation compared modulo the object's symmetry)
and no container point lies strictly inside the placed object's box.
"""
import logging
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np

from dapstore.geom import RigidTransform, apply_transform, compose, min_distances, rotation_angle, translation_distance
from dapstore.labeling import AffordanceField, LabelConfig
from dapstore.pose import arun_solve, collision_count
from .scenes import SceneSpec

logger = logging.getLogger(__name__)

SUCCESS_CRITERION = (
    "geometric proxy: nearest slot within pos_tol and rot_tol (modulo object symmetry) "
    "and zero container points inside the placed object's bounding box"
)

YAW_HALF_TURN = RigidTransform.from_yaw(np.pi).rotation


@dataclass
class EpisodeResult:
    success: bool
    matched_mode: Optional[int]
    collision_points: int
    pos_error: float
    rot_error: float
    nearest_mode: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def symmetric_rotation_error(reference: np.ndarray, rotation: np.ndarray, symmetry: str = "none") -> float:
    """
    Geodesic angle between two orientations, minimized over the symmetry group:
    "none", "yaw180" (half turn about the object z axis) or "yaw" (any turn
    about it, leaving only the tilt of the z axis).
    """
    if symmetry == "yaw":
        cosine = float(np.clip(reference[:, 2] @ rotation[:, 2], -1.0, 1.0))
        return float(np.arccos(cosine))
    error = rotation_angle(reference.T @ rotation)
    if symmetry == "yaw180":
        error = min(error, rotation_angle((reference @ YAW_HALF_TURN).T @ rotation))
    return error


def evaluate_placement(scene: SceneSpec, predicted: RigidTransform, obj) -> EpisodeResult:
    """
    Score a predicted transform for ``obj``, which must be the scene's object
    template moved rigidly (same point order).
    """
    current = arun_solve(scene.object_template.positions, obj.positions)
    placed_pose = compose(predicted, current)

    distances = [translation_distance(placed_pose, slot) for slot in scene.slot_poses]
    nearest = int(np.argmin(distances))
    pos_error = float(distances[nearest])
    rot_error = symmetric_rotation_error(scene.slot_poses[nearest].rotation, placed_pose.rotation, scene.symmetry)
    collisions = collision_count(scene.container, apply_transform(obj, predicted), 0.0)

    within = pos_error < scene.pos_tol and rot_error < scene.rot_tol
    result = EpisodeResult(
        success=within and collisions == 0,
        matched_mode=nearest if within else None,
        collision_points=collisions,
        pos_error=pos_error,
        rot_error=rot_error,
        nearest_mode=nearest,
    )
    logger.debug(f"Placement near slot {nearest}: pos {pos_error:.4f} m, rot {rot_error:.4f} rad, "
                 f"{collisions} collisions")
    return result


def slot_regions(scene: SceneSpec, cfg: LabelConfig = LabelConfig()) -> List[np.ndarray]:
    """Per slot, the container points a placement there labels positive"""
    regions = []
    for slot in scene.slot_poses:
        placed = apply_transform(scene.object_template, slot)
        regions.append(min_distances(scene.container, placed) < cfg.eps_place)
    return regions


def _region_fractions(field: AffordanceField, regions: List[np.ndarray]) -> np.ndarray:
    field.check_matches(regions[0].shape[0])
    positive = field.positive_mask
    return np.array([positive[region].mean() if region.any() else 0.0 for region in regions])


def dominant_mode(field: AffordanceField, regions: List[np.ndarray]) -> Optional[int]:
    """Slot whose region has the largest positive fraction, None when no region has any"""
    fractions = _region_fractions(field, regions)
    if fractions.max() <= 0:
        return None
    return int(np.argmax(fractions))


def positive_modes(field: AffordanceField, regions: List[np.ndarray], min_fraction: float = 0.5) -> List[int]:
    """Slots with at least min_fraction of their region scored positive"""
    fractions = _region_fractions(field, regions)
    return [int(i) for i in np.flatnonzero(fractions >= min_fraction)]


def coverage_summary(fields: List[AffordanceField], regions: List[np.ndarray]) -> dict:
    """
    Multi-modality of a set of sampled affordance fields on one scene.

    Returns:
        dict: samples, per-slot dominant counts (keys are slot ids as strings),
        the number of fields with no dominant slot, and the fraction of fields
        whose positive points select exactly one slot
    """
    counts = {str(slot): 0 for slot in range(len(regions))}
    no_mode = 0
    single = 0
    for field_k in fields:
        mode = dominant_mode(field_k, regions)
        if mode is None:
            no_mode += 1
        else:
            counts[str(mode)] += 1
        single += len(positive_modes(field_k, regions)) == 1
    return {
        "samples": len(fields),
        "dominant_counts": counts,
        "no_mode": no_mode,
        "single_slot_fraction": single / len(fields) if fields else 0.0,
    }
