from .attention import GroupedVectorAttention, gva_attention
from .losses import focal_loss
from .matching import MatchSet, extract_matches
from .model import CorrConfig, CorrespondenceNet, build_corr_model, corr_forward

__all__ = [
    "GroupedVectorAttention", "gva_attention", "focal_loss", "MatchSet", "extract_matches",
    "CorrConfig", "CorrespondenceNet", "build_corr_model", "corr_forward",
]
