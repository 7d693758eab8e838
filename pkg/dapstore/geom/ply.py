"""
PLY import/export for point clouds through Open3D's tensor point cloud.

Vertices carry positions, normals and an optional ``score`` attribute. ASCII
is the default; binary is available with binary=True.
"""
import logging
from pathlib import Path

import numpy as np
import open3d as o3d
import open3d.core as o3c

from dapstore.exceptions import FormatError
from .cloud import PointCloud

logger = logging.getLogger(__name__)

SCORE_ATTRIBUTE = "score"


def to_open3d(pc: PointCloud) -> o3d.t.geometry.PointCloud:
    cloud = o3d.t.geometry.PointCloud(o3c.Device("CPU:0"))
    cloud.point.positions = o3c.Tensor(np.ascontiguousarray(pc.positions), dtype=o3c.float64)
    cloud.point.normals = o3c.Tensor(np.ascontiguousarray(pc.normals), dtype=o3c.float64)
    if pc.scores is not None:
        cloud.point[SCORE_ATTRIBUTE] = o3c.Tensor(np.ascontiguousarray(pc.scores.reshape(-1, 1)), dtype=o3c.float64)
    return cloud


def write_ply(pc: PointCloud, path, binary: bool = False) -> Path:
    """
    Write a cloud to path, creating parent directories.

    Raises:
        OSError: Open3D could not write the file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not o3d.t.io.write_point_cloud(str(path), to_open3d(pc), write_ascii=not binary):
        raise OSError(f"failed to write point cloud to {path}")
    logger.debug(f"Wrote {len(pc)} vertices to {path}")
    return path


def read_ply(path) -> PointCloud:
    """
    Read a cloud written by write_ply (or any PLY with vertex positions and normals).

    Normals are renormalized, ASCII files store them at reduced precision.

    Raises:
        FormatError: unreadable file, no vertices or no normals
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    try:
        cloud = o3d.t.io.read_point_cloud(str(path), format="ply")
    except RuntimeError as e:
        raise FormatError(f"{path}: unreadable PLY ({e})") from e
    if cloud.is_empty() or "positions" not in cloud.point:
        raise FormatError(f"{path}: not a PLY point cloud or no vertices")
    if "normals" not in cloud.point:
        raise FormatError(f"{path}: missing vertex normals")

    positions = cloud.point.positions.numpy().astype(np.float64)
    normals = cloud.point.normals.numpy().astype(np.float64)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(lengths == 0.0):
        raise FormatError(f"{path}: zero-length vertex normal")
    scores = None
    if SCORE_ATTRIBUTE in cloud.point:
        scores = cloud.point[SCORE_ATTRIBUTE].numpy().astype(np.float64).reshape(-1)
    return PointCloud(positions, normals / lengths, scores)
