from .denoiser import (
    DenoiserConfig,
    DenoiserContext,
    PointDiT,
    build_denoiser,
    cap_logits,
    cap_loss,
    cap_predict,
    denoiser_forward,
)
from .embedding import fourier_embed, timestep_embedding
from .encoder import PointEncoder, encoder_forward
from .schedule import (
    AffordanceSample,
    NoiseSchedule,
    ddpm_loss,
    export_trajectory,
    make_schedule,
    q_sample,
    reverse_step,
    sample_affordance,
    sample_affordance_batch,
)

__all__ = [
    "DenoiserConfig", "DenoiserContext", "PointDiT", "build_denoiser",
    "cap_logits", "cap_loss", "cap_predict", "denoiser_forward",
    "fourier_embed", "timestep_embedding", "PointEncoder", "encoder_forward",
    "AffordanceSample", "NoiseSchedule", "ddpm_loss", "export_trajectory", "make_schedule",
    "q_sample", "reverse_step", "sample_affordance", "sample_affordance_batch",
]
