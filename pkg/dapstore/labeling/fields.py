from dataclasses import dataclass

import numpy as np

from dapstore.exceptions import ShapeError


def _readonly(values, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    if array.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ShapeError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class AffordanceField:
    """
    One score per container point.

    Ground-truth labels are exactly +1/-1; diffusion states in between are
    unbounded reals.
    """
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", _readonly(self.scores, 1, "scores"))

    def __len__(self):
        return self.scores.shape[0]

    @property
    def positive_mask(self) -> np.ndarray:
        """Points that survive score cropping (score >= 0)"""
        return self.scores >= 0

    @property
    def fraction_positive(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.mean(self.positive_mask))

    def clamped(self, low: float = -1.0, high: float = 1.0) -> "AffordanceField":
        return AffordanceField(np.clip(self.scores, low, high))

    def check_matches(self, n_points: int):
        if len(self) != n_points:
            raise ShapeError(f"affordance field has {len(self)} scores for {n_points} points")


@dataclass(frozen=True, eq=False)
class CorrespondenceMatrix:
    """
    N_O x N_C matrix: row i is an object point, column j a container point.
    Labels hold 0/1; network predictions hold probabilities.
    """
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values, 2, "correspondence values")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ShapeError("correspondence values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_object(self) -> int:
        return self.values.shape[0]

    @property
    def n_container(self) -> int:
        return self.values.shape[1]

    def labeled_rows(self) -> np.ndarray:
        """Indices of object rows with at least one positive entry"""
        return np.flatnonzero(self.values.max(axis=1) > 0) if self.n_container else np.zeros(0, dtype=np.int64)

    def check_matches(self, n_object: int, n_container: int):
        if self.shape != (n_object, n_container):
            raise ShapeError(
                f"correspondence matrix {self.shape} does not match clouds ({n_object}, {n_container})")
