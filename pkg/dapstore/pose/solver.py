import numpy as np

from dapstore.exceptions import ConfigError, DegenerateGeometryError, InsufficientMatchesError, ShapeError
from dapstore.geom import RigidTransform

MIN_PAIRS = 3
RANK_TOLERANCE = 1e-10


def arun_solve(src, dst, weights=None) -> RigidTransform:
    """
    Weighted least-squares rigid fit: the (R, t) minimizing
    sum_i w_i |R src_i + t - dst_i|^2.

    Centroids are weighted; the rotation comes from the SVD of the weighted
    cross-covariance H = U S V^T as R = V diag(1, 1, d) U^T with
    d = sign(det(V U^T)), so reflections are never returned.

    Args:
        src: (N, 3) source points
        dst: (N, 3) target points
        weights: (N,) positive weights, uniform when omitted

    Raises:
        ShapeError: src and dst differ in shape
        InsufficientMatchesError: fewer than three pairs
        DegenerateGeometryError: H has rank <= 1 (collinear or coincident points)
    """
    A = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    B = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if A.shape != B.shape:
        raise ShapeError(f"arun_solve: src {A.shape} and dst {B.shape} differ")
    if A.shape[0] < MIN_PAIRS:
        raise InsufficientMatchesError(f"arun_solve needs {MIN_PAIRS} pairs, got {A.shape[0]}")
    w = np.ones(A.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != A.shape[0]:
        raise ShapeError(f"arun_solve: {w.shape[0]} weights for {A.shape[0]} pairs")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ConfigError("arun_solve weights must be finite and positive")
    w = w / w.sum()

    centroid_A = w @ A
    centroid_B = w @ B

    # compute rotation
    H = (A - centroid_A).T @ ((B - centroid_B) * w[:, None])
    U, S, Vt = np.linalg.svd(H)
    if S[0] <= RANK_TOLERANCE or S[1] < RANK_TOLERANCE * S[0]:
        raise DegenerateGeometryError(f"cross-covariance is rank deficient (singular values {S})")
    V = Vt.T

    d = np.sign(np.linalg.det(V @ U.T))
    R = V @ np.diag([1.0, 1.0, d]) @ U.T

    t = centroid_B - R @ centroid_A
    return RigidTransform(R, t)


def weighted_residual(transform: RigidTransform, src, dst, weights=None) -> float:
    """sum_i w_i |R src_i + t - dst_i|^2"""
    diff = transform.apply_points(src) - np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    w = np.ones(diff.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(np.sum(w * np.sum(diff ** 2, axis=1)))
