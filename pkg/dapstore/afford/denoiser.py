"""
Point-DiT noise predictor and the one-shot classification variant.

Tokens are per-point encoder features concatenated with the current score.
A time token produced from the diffusion step modulates every block through
adaptive layer norm (shift, scale, gate). Fourier position features are added
to the tokens at the start of every block. The modulation layers and the
output head start at zero, so a freshly built model predicts exactly 0.
"""
import logging
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from dapstore.exceptions import ConfigError, ShapeError
from dapstore.geom import PointCloud
from dapstore.labeling import AffordanceField
from dapstore.tensor import ops
from .embedding import fourier_embed, timestep_embedding
from .encoder import PointEncoder

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DenoiserConfig:
    token_dim: int = 64
    num_layers: int = 3
    num_heads: int = 4
    fourier_freqs: int = 6
    encoder_k: int = 8
    time_embed_dim: int = 64

    def __post_init__(self):
        for name in ("token_dim", "num_layers", "num_heads", "fourier_freqs", "encoder_k", "time_embed_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"denoiser.{name} must be positive, got {getattr(self, name)}")
        if self.token_dim % self.num_heads:
            raise ConfigError(
                f"denoiser.token_dim ({self.token_dim}) must be divisible by num_heads ({self.num_heads})")


@dataclass
class DenoiserContext:
    """Container encoding reused across every denoising step"""
    features: torch.Tensor
    pos_embedding: torch.Tensor

    @property
    def n_points(self) -> int:
        return self.features.shape[0]


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class PointDiTBlock(nn.Module):
    def __init__(self, dim: int, heads: int, pos_dim: int):
        super().__init__()
        self.pos_proj = nn.Linear(pos_dim, dim)
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim),
            nn.GELU(approximate="tanh"),
            nn.Linear(4 * dim, dim),
        )
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 6 * dim))

    def forward(self, x: torch.Tensor, c: torch.Tensor, pos_embedding: torch.Tensor) -> torch.Tensor:
        x = x + self.pos_proj(pos_embedding)
        shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp = self.adaLN_modulation(c).chunk(6, dim=1)
        h = modulate(self.norm1(x), shift_msa, scale_msa)
        x = x + gate_msa.unsqueeze(1) * self.attn(h, h, h, need_weights=False)[0]
        h = modulate(self.norm2(x), shift_mlp, scale_mlp)
        return x + gate_mlp.unsqueeze(1) * self.mlp(h)


class PointDiT(nn.Module):
    """
    eps_theta(S(t), t, P_C): one noise prediction per container point.

    The same module serves the classification variant, evaluated at t = 0
    with a zero score channel.
    """

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        dim = cfg.token_dim
        self.encoder = PointEncoder(dim, cfg.encoder_k)
        self.point_in = nn.Linear(dim + 1, dim)
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_embed_dim, dim),
            nn.SiLU(),
            nn.Linear(dim, dim),
        )
        self.blocks = nn.ModuleList([
            PointDiTBlock(dim, cfg.num_heads, 6 * cfg.fourier_freqs) for _ in range(cfg.num_layers)
        ])
        self.final_norm = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.final_modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 2 * dim))
        self.head = nn.Linear(dim, 1)
        self.initialize_weights()

    def initialize_weights(self):
        ops.xavier_init(self)
        for block in self.blocks:
            ops.zero_init(block.adaLN_modulation[-1])
        ops.zero_init(self.final_modulation[-1])
        ops.zero_init(self.head)

    def encode(self, container: PointCloud) -> DenoiserContext:
        features = self.encoder.encode(container)
        return DenoiserContext(features, fourier_embed(container.positions, self.cfg.fourier_freqs))

    def forward(self, scores, t, container) -> torch.Tensor:
        """
        Args:
            scores: (N,) or (B, N) noisy scores
            t: diffusion step, int or (B,) tensor
            container: PointCloud or a DenoiserContext from encode()

        Returns:
            torch.Tensor: predicted noise with the shape of scores
        """
        context = self.encode(container) if isinstance(container, PointCloud) else container
        scores = torch.as_tensor(scores, dtype=torch.float64)
        single = scores.dim() == 1
        batch = scores.unsqueeze(0) if single else scores
        if batch.dim() != 2 or batch.shape[1] != context.n_points:
            raise ShapeError(
                f"denoiser: scores {tuple(scores.shape)} do not match {context.n_points} container points")
        B, N = batch.shape

        steps = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
        if steps.numel() == 1:
            steps = steps.expand(B)
        c = self.time_mlp(timestep_embedding(steps, self.cfg.time_embed_dim))

        features = ops.broadcast(context.features.unsqueeze(0), (B, N, self.cfg.token_dim))
        x = self.point_in(ops.concat([features, batch.unsqueeze(-1)], dim=-1))
        for block in self.blocks:
            x = block(x, c, context.pos_embedding)

        shift, scale = self.final_modulation(c).chunk(2, dim=1)
        out = self.head(modulate(self.final_norm(x), shift, scale)).squeeze(-1)
        return out[0] if single else out


def build_denoiser(cfg: DenoiserConfig, seed: int) -> PointDiT:
    """Seeded float64 model; the global torch RNG is left untouched"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed % (2 ** 63))
        model = PointDiT(cfg).double()
    return model


def denoiser_forward(model: PointDiT, s_t, t, container) -> torch.Tensor:
    return model(s_t, t, container)


def cap_logits(model, container) -> torch.Tensor:
    """Classification logits: step 0 and an all-zero score channel"""
    n_points = len(container) if isinstance(container, PointCloud) else container.n_points
    return model(torch.zeros(n_points, dtype=torch.float64), 0, container)


def cap_loss(model, labels, container) -> torch.Tensor:
    """Binary cross-entropy of sigmoid(logits) against (label + 1) / 2"""
    values = labels.scores if isinstance(labels, AffordanceField) else labels
    target = (torch.as_tensor(values, dtype=torch.float64) + 1.0) / 2.0
    logits = cap_logits(model, container)
    if logits.shape != target.shape:
        raise ShapeError(f"cap_loss: logits {tuple(logits.shape)} vs labels {tuple(target.shape)}")
    return F.binary_cross_entropy_with_logits(logits, target)


def cap_predict(model, container) -> AffordanceField:
    """One forward pass mapped to [-1, 1] as 2 * sigmoid(logits) - 1"""
    with torch.no_grad():
        logits = cap_logits(model, container)
    return AffordanceField((2.0 * torch.sigmoid(logits) - 1.0).numpy())
