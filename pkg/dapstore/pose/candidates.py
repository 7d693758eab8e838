from dataclasses import dataclass
from typing import List, Optional

from dapstore.exceptions import NoCandidatesError, SizeError
from dapstore.geom import PointCloud, RigidTransform, aabb_of
from dapstore.labeling import AffordanceField


@dataclass
class Candidate:
    index: int
    transform: RigidTransform
    collision_count: int
    match_count: int
    crop_size: int
    affordance: Optional[AffordanceField] = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            **self.transform.to_dict(),
            "collisions": self.collision_count,
            "matches": self.match_count,
            "crop_size": self.crop_size,
        }


def collision_count(cropped_container: PointCloud, placed_object: PointCloud, margin: float = 0.0) -> int:
    """Container points strictly inside the placed object's bounding box grown by margin"""
    if placed_object.is_empty:
        raise SizeError("collision check needs a nonempty object")
    if cropped_container.is_empty:
        return 0
    box = aabb_of(placed_object, margin)
    return int(box.contains(cropped_container.positions, strict=True).sum())


def rank_candidates(cands: List[Candidate]) -> List[Candidate]:
    """
    Fewest collisions first; ties go to the candidate with more matches, then
    to the earlier one.
    """
    if not cands:
        raise NoCandidatesError()
    order = sorted(range(len(cands)), key=lambda i: (cands[i].collision_count, -cands[i].match_count, i))
    return [cands[i] for i in order]
