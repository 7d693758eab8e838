"""
Ground-truth labels derived from demonstrations.

A demonstration pairs a container cloud and an object cloud with the goal
transform that carries the object into its stored pose. Labels are computed
by thresholding distances between the container and the transformed object.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from dapstore.exceptions import ConfigError, DegenerateDemoError, EmptyCropError, SizeError
from dapstore.geom import PointCloud, RigidTransform, aabb_of, apply_transform, min_distances
from .fields import AffordanceField, CorrespondenceMatrix

logger = logging.getLogger(__name__)

# A demonstration crop must keep at least this many container points
MIN_CROP_POINTS = 8
CROP_RETRIES = 5
CROP_GROWTH = 1.5


@dataclass(frozen=True, eq=False)
class Demonstration:
    container: PointCloud
    object: PointCloud
    goal: RigidTransform
    mode_id: Optional[int] = None

    def __post_init__(self):
        if self.container.is_empty or self.object.is_empty:
            raise SizeError("demonstration clouds must be nonempty")

    def placed_object(self) -> PointCloud:
        """Object cloud moved into its demonstrated goal pose"""
        return apply_transform(self.object, self.goal)


@dataclass(frozen=True)
class LabelConfig:
    eps_place: float = 0.04
    eps_corr: float = 0.02
    crop_scale_min: float = 1.2
    crop_scale_max: float = 2.0

    def __post_init__(self):
        if not (self.eps_place > 0 and self.eps_corr > 0):
            raise ConfigError(
                f"eps_place and eps_corr must be positive, got {self.eps_place} and {self.eps_corr}")
        if not (1.0 <= self.crop_scale_min <= self.crop_scale_max):
            raise ConfigError(
                f"crop scales must satisfy 1 <= min <= max, got [{self.crop_scale_min}, {self.crop_scale_max}]")


def label_affordance(demo: Demonstration, cfg: LabelConfig) -> AffordanceField:
    """
    Score each container point +1 when its distance to the nearest point of
    the transformed object is below eps_place, -1 otherwise.
    """
    distances = min_distances(demo.container, demo.placed_object())
    return AffordanceField(np.where(distances < cfg.eps_place, 1.0, -1.0))


def label_correspondence(cropped_container: PointCloud, object_pc: PointCloud,
                         goal: RigidTransform, cfg: LabelConfig) -> CorrespondenceMatrix:
    """
    C[i, j] = 1 when transformed object point i lies within eps_corr of
    container point j.
    """
    if cropped_container.is_empty or object_pc.is_empty:
        raise SizeError("correspondence labels need nonempty clouds")
    placed = goal.apply_points(object_pc.positions)
    distances = cdist(placed, cropped_container.positions)
    return CorrespondenceMatrix((distances < cfg.eps_corr).astype(np.float64))


def sample_demo_crop(container: PointCloud, object_pc: PointCloud, goal: RigidTransform,
                     cfg: LabelConfig, rng_seed: int) -> PointCloud:
    """
    Random box crop of the container around the demonstrated placement.

    The goal-pose object box is grown per axis by a factor drawn from
    [crop_scale_min, crop_scale_max].

    Returns world-frame container points; they are not re-centered on the box center.

    Raises:
        DegenerateDemoError: if fewer than MIN_CROP_POINTS survive after all retries
    """
    box = aabb_of(apply_transform(object_pc, goal))
    rng = np.random.default_rng(rng_seed)
    scale = rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max, size=3)

    for attempt in range(CROP_RETRIES + 1):
        growth = (scale - 1.0) * box.half_extents
        lower = box.min - growth
        upper = box.max + growth
        inside = np.all((container.positions >= lower) & (container.positions <= upper), axis=1)
        count = int(np.count_nonzero(inside))
        if count >= MIN_CROP_POINTS:
            return container.subset(np.flatnonzero(inside))
        if attempt < CROP_RETRIES:
            logger.warning(f"Demo crop kept {count} points, enlarging (retry {attempt + 1}/{CROP_RETRIES})")
            scale = scale * CROP_GROWTH

    raise DegenerateDemoError(
        f"demo crop kept fewer than {MIN_CROP_POINTS} container points after {CROP_RETRIES} retries")


def crop_by_scores(container: PointCloud, scores: AffordanceField) -> PointCloud:
    """
    Keep container points whose score is non-negative, in input order.

    Raises:
        EmptyCropError: if every score is negative
    """
    scores.check_matches(len(container))
    keep = np.flatnonzero(scores.positive_mask)
    if keep.size == 0:
        raise EmptyCropError()
    return container.subset(keep)
