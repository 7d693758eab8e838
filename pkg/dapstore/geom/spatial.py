"""
Exact spatial queries over point clouds: KNN, nearest distances, bounding
boxes and voxel-grid superpoint clustering.
"""
import logging

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from dapstore.exceptions import ConfigError, SizeError
from .cloud import Aabb, PointCloud

logger = logging.getLogger(__name__)

# Rows of the distance matrix processed at once by knn_positions
KNN_CHUNK = 2048


def knn_positions(query: np.ndarray, key: np.ndarray, k: int) -> np.ndarray:
    """
    Indices of the k nearest key points for every query point.

    Exact brute-force search. Rows are sorted ascending by distance; a stable
    sort breaks distance ties by the lower key index.

    Args:
        query: (Nq, 3) positions
        key: (Nk, 3) positions
        k: neighbors per query point

    Returns:
        np.ndarray: (Nq, k) int64 indices into key

    Raises:
        SizeError: if key has fewer than k points
    """
    query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
    key = np.asarray(key, dtype=np.float64).reshape(-1, 3)
    if k < 1:
        raise SizeError(f"k must be positive, got {k}")
    if key.shape[0] < k:
        raise SizeError(f"need at least {k} key points, got {key.shape[0]}")

    result = np.empty((query.shape[0], k), dtype=np.int64)
    for start in range(0, query.shape[0], KNN_CHUNK):
        distances = cdist(query[start:start + KNN_CHUNK], key)
        order = np.argsort(distances, axis=1, kind="stable")
        result[start:start + KNN_CHUNK] = order[:, :k]
    return result


def knn_indices(query: PointCloud, key: PointCloud, k: int) -> list:
    """knn_positions over clouds, returned as a list of index lists"""
    return knn_positions(query.positions, key.positions, k).tolist()


def min_distances(a: PointCloud, b: PointCloud) -> np.ndarray:
    """
    For every point of a, the Euclidean distance to its nearest point of b.

    Raises:
        SizeError: if b is empty
    """
    if b.is_empty:
        raise SizeError("min_distances needs a nonempty reference cloud")
    if a.is_empty:
        return np.zeros(0)
    distances, _ = cKDTree(b.positions).query(a.positions, k=1)
    return np.asarray(distances, dtype=np.float64)


def aabb_of(pc: PointCloud, margin: float = 0.0) -> Aabb:
    """Componentwise min/max of positions, expanded by margin on all sides"""
    if pc.is_empty:
        raise SizeError("bounding box of an empty cloud")
    if margin < 0:
        raise ConfigError(f"margin must be non-negative, got {margin}")
    return Aabb(pc.positions.min(axis=0) - margin, pc.positions.max(axis=0) + margin)


def superpoint_cluster(pc: PointCloud, voxel_size: float) -> PointCloud:
    """
    Replace the cloud by one superpoint per occupied voxel.

    Points are bucketed by floor(position / voxel_size). Each superpoint carries
    the mean position and the re-normalized mean normal of its members (the
    first member's normal when the mean nearly cancels) and the mean score when
    scores are present. Output is ordered by voxel key, lexicographically.
    """
    if pc.is_empty:
        raise SizeError("cannot cluster an empty cloud")
    if not (np.isfinite(voxel_size) and voxel_size > 0):
        raise ConfigError(f"voxel_size must be finite and positive, got {voxel_size}")

    keys = np.floor(pc.positions / voxel_size).astype(np.int64)
    _, first_member, inverse, counts = np.unique(
        keys, axis=0, return_index=True, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    n_clusters = counts.shape[0]

    positions = np.zeros((n_clusters, 3))
    normals = np.zeros((n_clusters, 3))
    np.add.at(positions, inverse, pc.positions)
    np.add.at(normals, inverse, pc.normals)
    positions /= counts[:, None]
    normals /= counts[:, None]

    norms = np.linalg.norm(normals, axis=1)
    degenerate = norms < 1e-8
    normals[~degenerate] /= norms[~degenerate, None]
    normals[degenerate] = pc.normals[first_member[degenerate]]

    scores = None
    if pc.scores is not None:
        scores = np.zeros(n_clusters)
        np.add.at(scores, inverse, pc.scores)
        scores /= counts

    logger.debug(f"Clustered {len(pc)} points into {n_clusters} superpoints (voxel {voxel_size})")
    return PointCloud(positions, normals, scores)
