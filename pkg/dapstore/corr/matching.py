import logging
from dataclasses import dataclass

import numpy as np

from dapstore.exceptions import InsufficientMatchesError, ShapeError
from dapstore.geom import PointCloud
from dapstore.labeling import CorrespondenceMatrix

logger = logging.getLogger(__name__)

MIN_MATCHES = 3


@dataclass(frozen=True, eq=False)
class MatchSet:
    """Matched (object index, container index, weight) triples"""
    object_index: np.ndarray
    container_index: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for name in ("object_index", "container_index"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64).reshape(-1))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64).reshape(-1))
        if not (self.object_index.shape == self.container_index.shape == self.weights.shape):
            raise ShapeError("match index and weight arrays differ in length")
        if np.any(self.weights <= 0):
            raise ShapeError("match weights must be positive")

    def __len__(self):
        return self.weights.shape[0]

    @property
    def pairs(self):
        return list(zip(self.object_index.tolist(), self.container_index.tolist(), self.weights.tolist()))

    def source_points(self, obj: PointCloud) -> np.ndarray:
        return obj.positions[self.object_index]

    def target_points(self, container: PointCloud) -> np.ndarray:
        return container.positions[self.container_index]

    def target_normals(self, container: PointCloud) -> np.ndarray:
        return container.normals[self.container_index]


def extract_matches(pred: CorrespondenceMatrix, obj: PointCloud, container: PointCloud,
                    threshold: float = 0.5) -> MatchSet:
    """
    Keep each object row's best container column when its score reaches
    the threshold.

    Raises:
        InsufficientMatchesError: fewer than three rows qualify
    """
    pred.check_matches(len(obj), len(container))
    if pred.n_container == 0:
        raise InsufficientMatchesError("no container points to match against")
    best = np.argmax(pred.values, axis=1)
    weights = pred.values[np.arange(pred.n_object), best]
    keep = weights >= threshold
    if int(keep.sum()) < MIN_MATCHES:
        raise InsufficientMatchesError(
            f"{int(keep.sum())} object points matched at threshold {threshold}, need {MIN_MATCHES}")
    matches = MatchSet(np.flatnonzero(keep), best[keep], weights[keep])
    logger.debug(f"Extracted {len(matches)} matches from a {pred.shape} correspondence matrix")
    return matches
