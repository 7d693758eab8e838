"""
K-candidate storage pose inference.

Every candidate samples an affordance field, crops the container to its
positive points, predicts correspondences to the object, solves the pose from
the matches and counts the crop points the placed object would collide with.
Candidates whose construction fails are skipped; the survivors are ranked.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from dapstore.afford import cap_predict, sample_affordance_batch
from dapstore.corr import corr_forward, extract_matches
from dapstore.exceptions import (
    ConfigError,
    DegenerateGeometryError,
    EmptyCropError,
    InsufficientMatchesError,
    NoCandidatesError,
    SizeError,
)
from dapstore.geom import PointCloud, apply_transform
from dapstore.labeling import AffordanceField, crop_by_scores
from dapstore.utils import parallel_map
from .candidates import Candidate, collision_count, rank_candidates
from .solver import arun_solve

logger = logging.getLogger(__name__)

SKIPPABLE_ERRORS = (EmptyCropError, InsufficientMatchesError, DegenerateGeometryError, SizeError)


@dataclass(frozen=True)
class InferConfig:
    K: int = 8
    collision_margin: float = 0.005
    contact_offset: float = 0.0
    match_threshold: float = 0.5

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"infer.K must be at least 1, got {self.K}")
        if self.collision_margin < 0:
            raise ConfigError(f"infer.collision_margin must be non-negative, got {self.collision_margin}")
        if self.contact_offset < 0:
            raise ConfigError(f"infer.contact_offset must be non-negative, got {self.contact_offset}")


@dataclass
class InferenceResult:
    best: Candidate
    ranked: List[Candidate]
    failures: List[Tuple[int, str]] = field(default_factory=list)
    trajectory: Optional[list] = None


def build_candidate(index: int, affordance: AffordanceField, corr_model, container: PointCloud,
                    obj: PointCloud, cfg: InferConfig) -> Candidate:
    """
    One candidate from one affordance field. Targets are the matched container
    positions, pushed out along their normals when cfg.contact_offset > 0.
    """
    crop = crop_by_scores(container, affordance)
    pred = corr_forward(corr_model, crop, obj)
    matches = extract_matches(pred, obj, crop, cfg.match_threshold)
    dst = matches.target_points(crop) + cfg.contact_offset * matches.target_normals(crop)
    transform = arun_solve(matches.source_points(obj), dst, matches.weights)
    collisions = collision_count(crop, apply_transform(obj, transform), cfg.collision_margin)
    logger.debug(f"Candidate {index}: crop {len(crop)} points, {len(matches)} matches, {collisions} collisions")
    return Candidate(index, transform, collisions, len(matches), len(crop), affordance)


def _rank(outcomes) -> InferenceResult:
    survivors, failures = [], []
    for index, outcome in outcomes:
        if isinstance(outcome, Candidate):
            survivors.append(outcome)
        else:
            logger.warning(f"Skipped candidate {index}: {outcome.default_code} ({outcome})")
            failures.append((index, outcome.default_code))
    if not survivors:
        raise NoCandidatesError(failures=failures)
    ranked = rank_candidates(survivors)
    return InferenceResult(ranked[0], ranked, failures)


def _attempt(index, affordance, corr_model, container, obj, cfg):
    try:
        return index, build_candidate(index, affordance, corr_model, container, obj, cfg)
    except SKIPPABLE_ERRORS as e:
        return index, e


def infer_storage_pose(afford_model, corr_model, container: PointCloud, obj: PointCloud, sched, rng_seed: int,
                       cfg: InferConfig = InferConfig(), max_workers: int = 1,
                       record_trajectory: bool = False) -> InferenceResult:
    """
    Sample cfg.K affordance fields (candidate k seeded rng_seed + k), build a
    candidate from each and rank the survivors. With record_trajectory the
    result carries the denoising snapshots of the best candidate.

    Raises:
        NoCandidatesError: every candidate failed; carries (index, code) tags
    """
    samples = sample_affordance_batch(afford_model, container, sched, rng_seed, cfg.K, record_trajectory)
    outcomes = parallel_map(
        lambda k: _attempt(k, samples[k].scores, corr_model, container, obj, cfg),
        range(cfg.K), max_workers=max_workers)
    result = _rank(outcomes)
    if record_trajectory:
        result.trajectory = samples[result.best.index].trajectory
    logger.info(f"Ranked {len(result.ranked)} of {cfg.K} candidates, best has "
                f"{result.best.collision_count} collisions")
    return result


def cap_storage_pose(cap_model, corr_model, container: PointCloud, obj: PointCloud,
                     cfg: InferConfig = InferConfig(), affordance: AffordanceField = None) -> InferenceResult:
    """Single candidate from the one-shot classification affordance (computed unless given)"""
    if affordance is None:
        affordance = cap_predict(cap_model, container)
    return _rank([_attempt(0, affordance, corr_model, container, obj, cfg)])
