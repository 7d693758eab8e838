from .candidates import Candidate, collision_count, rank_candidates
from .inference import InferConfig, InferenceResult, build_candidate, cap_storage_pose, infer_storage_pose
from .solver import arun_solve, weighted_residual

__all__ = [
    "Candidate", "collision_count", "rank_candidates",
    "InferConfig", "InferenceResult", "build_candidate", "cap_storage_pose", "infer_storage_pose",
    "arun_solve", "weighted_residual",
]
