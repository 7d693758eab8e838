from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt

from dapstore.exceptions import ShapeError, SizeError

# A single 3-vector (meters for positions, unit-less for normals)
Vec3 = npt.NDArray[np.float64]

NORMAL_TOLERANCE = 1e-6


def _frozen_array(values, name: str, width: Optional[int]) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    if width is None:
        array = array.reshape(-1)
    else:
        if array.size == 0:
            array = array.reshape(0, width)
        if array.ndim != 2 or array.shape[1] != width:
            raise ShapeError(f"{name} must have shape (N, {width}), got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ShapeError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    Points with unit normals and an optional per-point score channel.
    Arrays are copied on construction and made read-only.
    """
    positions: np.ndarray
    normals: np.ndarray
    scores: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        positions = _frozen_array(self.positions, "positions", 3)
        normals = _frozen_array(self.normals, "normals", 3)
        if positions.shape[0] != normals.shape[0]:
            raise ShapeError(
                f"positions and normals differ in length: {positions.shape} vs {normals.shape}")
        norms = np.linalg.norm(normals, axis=1)
        if norms.size and np.max(np.abs(norms - 1.0)) > NORMAL_TOLERANCE:
            raise ShapeError("every normal must have unit length")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "normals", normals)

        if self.scores is not None:
            scores = _frozen_array(self.scores, "scores", None)
            if scores.shape[0] != positions.shape[0]:
                raise ShapeError(
                    f"scores length {scores.shape[0]} does not match {positions.shape[0]} points")
            object.__setattr__(self, "scores", scores)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def subset(self, indices: Sequence[int]) -> "PointCloud":
        """Points at the given indices, in the given order"""
        indices = np.asarray(indices, dtype=np.int64)
        scores = None if self.scores is None else self.scores[indices]
        return PointCloud(self.positions[indices], self.normals[indices], scores)

    def with_scores(self, scores) -> "PointCloud":
        return PointCloud(self.positions, self.normals, scores)

    def centroid(self) -> Vec3:
        if self.is_empty:
            raise SizeError("centroid of an empty cloud")
        return self.positions.mean(axis=0)

    def __repr__(self):
        extra = ", scored" if self.scores is not None else ""
        return f"PointCloud(n={len(self)}{extra})"


@dataclass(frozen=True, eq=False)
class Aabb:
    """Axis-aligned bounding box, min <= max componentwise"""
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lower = _frozen_array(np.reshape(self.min, (1, 3)), "min", 3)[0]
        upper = _frozen_array(np.reshape(self.max, (1, 3)), "max", 3)[0]
        if np.any(lower > upper):
            raise ShapeError(f"Aabb min {lower} exceeds max {upper}")
        object.__setattr__(self, "min", lower)
        object.__setattr__(self, "max", upper)

    @property
    def center(self) -> Vec3:
        return 0.5 * (self.min + self.max)

    @property
    def half_extents(self) -> Vec3:
        return 0.5 * (self.max - self.min)

    def contains(self, points: np.ndarray, strict: bool = False) -> np.ndarray:
        """Boolean membership mask for an (N, 3) array"""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if strict:
            inside = (points > self.min) & (points < self.max)
        else:
            inside = (points >= self.min) & (points <= self.max)
        return np.all(inside, axis=1)
