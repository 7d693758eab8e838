from .cloud import Aabb, PointCloud, Vec3
from .transforms import (
    RigidTransform,
    apply_transform,
    compose,
    invert,
    random_rotation,
    random_transform,
    rotation_angle,
    translation_distance,
)
from .spatial import aabb_of, knn_indices, knn_positions, min_distances, superpoint_cluster
from .ply import read_ply, write_ply

__all__ = [
    "Aabb", "PointCloud", "Vec3", "RigidTransform",
    "apply_transform", "compose", "invert",
    "random_rotation", "random_transform", "rotation_angle", "translation_distance",
    "aabb_of", "knn_indices", "knn_positions", "min_distances", "superpoint_cluster",
    "read_ply", "write_ply",
]
