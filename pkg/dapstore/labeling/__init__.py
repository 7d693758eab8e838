from .fields import AffordanceField, CorrespondenceMatrix
from .labels import (
    Demonstration,
    MIN_CROP_POINTS,
    LabelConfig,
    crop_by_scores,
    label_affordance,
    label_correspondence,
    sample_demo_crop,
)

__all__ = [
    "AffordanceField", "CorrespondenceMatrix", "Demonstration", "LabelConfig", "MIN_CROP_POINTS",
    "crop_by_scores", "label_affordance", "label_correspondence", "sample_demo_crop",
]
