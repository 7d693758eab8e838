from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from dapstore.exceptions import ShapeError
from .cloud import PointCloud

ORTHONORMAL_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """
    Rotation + translation in SE(3); maps v -> R v + t.
    """
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64, copy=True)
        translation = np.array(self.translation, dtype=np.float64, copy=True).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise ShapeError(
                f"expected rotation (3, 3) and translation (3,), got {rotation.shape} and {translation.shape}")
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise ShapeError("transform contains non-finite values")
        if np.linalg.norm(rotation.T @ rotation - np.eye(3)) > ORTHONORMAL_TOLERANCE:
            raise ShapeError("rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise ShapeError("rotation determinant is not +1")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(Rotation.from_rotvec(rotvec).as_matrix(), translation)

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls.from_rotvec([0.0, 0.0, yaw], translation)

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return points @ self.rotation.T + self.translation

    def apply_vectors(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.asarray(vectors, dtype=np.float64).reshape(-1, 3)
        return vectors @ self.rotation.T

    def as_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def to_dict(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RigidTransform":
        return cls(np.reshape(data["rotation"], (3, 3)), data["translation"])

    def __repr__(self):
        rotvec = Rotation.from_matrix(self.rotation).as_rotvec()
        return f"RigidTransform(rotvec={np.round(rotvec, 4)}, t={np.round(self.translation, 4)})"


def apply_transform(pc: PointCloud, t: RigidTransform) -> PointCloud:
    """Map positions v' = R v + t and normals n' = R n; scores are carried over."""
    return PointCloud(t.apply_points(pc.positions), t.apply_vectors(pc.normals), pc.scores)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform equivalent to applying b first, then a"""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rotation_t = t.rotation.T
    return RigidTransform(rotation_t, -rotation_t @ t.translation)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation matrix"""
    return Rotation.random(random_state=rng).as_matrix()


def random_transform(rng: np.random.Generator, translation_scale: float = 1.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-translation_scale, translation_scale, size=3))


def rotation_angle(rotation: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in radians"""
    return float(Rotation.from_matrix(rotation).magnitude())


def translation_distance(a: RigidTransform, b: RigidTransform) -> float:
    return float(np.linalg.norm(a.translation - b.translation))

