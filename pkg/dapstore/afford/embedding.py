import math

import torch

from dapstore.exceptions import ConfigError


def fourier_embed(positions, num_freqs: int) -> torch.Tensor:
    """
    Fourier features of 3D positions.

    For each axis a in (x, y, z) and k in 0..num_freqs-1 the pair
    [sin(2^k pi a), cos(2^k pi a)] is emitted, axis-major, giving
    6 * num_freqs features per point.

    Args:
        positions: (N, 3) array or tensor
        num_freqs: number of octaves

    Returns:
        torch.Tensor: (N, 6 * num_freqs) float64
    """
    if num_freqs < 1:
        raise ConfigError(f"num_freqs must be at least 1, got {num_freqs}")
    positions = torch.as_tensor(positions, dtype=torch.float64).reshape(-1, 3)
    freqs = math.pi * 2.0 ** torch.arange(num_freqs, dtype=torch.float64)
    angles = positions[:, :, None] * freqs
    features = torch.stack([torch.sin(angles), torch.cos(angles)], dim=-1)
    return features.reshape(positions.shape[0], 6 * num_freqs)


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """
    Sinusoidal embedding of diffusion steps, (B,) -> (B, dim).
    """
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / max(half, 1))
    args = t[:, None] * freqs[None]
    embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        embedding = torch.cat([embedding, torch.zeros_like(embedding[:, :1])], dim=-1)
    return embedding
