import torch
import torch.nn as nn

from dapstore.exceptions import SizeError
from dapstore.geom import PointCloud, knn_positions
from dapstore.tensor import ops


class PointEncoder(nn.Module):
    """
    Per-point features from positions and normals.

    A shared two-layer MLP embeds [position, normal]; each point then
    max-pools the embeddings of its k nearest neighbors (itself included),
    concatenates them with its own embedding and projects to token_dim.
    """

    def __init__(self, token_dim: int, k: int, hidden_dim: int = None):
        super().__init__()
        hidden_dim = hidden_dim or token_dim
        self.k = k
        self.mlp = nn.Sequential(
            nn.Linear(6, hidden_dim),
            nn.ReLU(inplace=False),
            nn.Linear(hidden_dim, hidden_dim),
        )
        self.proj = nn.Linear(2 * hidden_dim, token_dim)

    def forward(self, positions: torch.Tensor, normals: torch.Tensor, neighbors: torch.Tensor) -> torch.Tensor:
        """
        Args:
            positions: (N, 3)
            normals: (N, 3)
            neighbors: (N, k) neighbor indices

        Returns:
            torch.Tensor: (N, token_dim)
        """
        local = self.mlp(ops.concat([positions, normals], dim=-1))
        pooled = ops.gather_rows(local, neighbors).max(dim=1).values
        return self.proj(ops.concat([local, pooled], dim=-1))

    def encode(self, pc: PointCloud, center=None, k: int = None) -> torch.Tensor:
        """Encode a cloud, optionally re-expressed relative to ``center``"""
        k = k or self.k
        if len(pc) < k:
            raise SizeError(f"encoder needs at least {k} points, got {len(pc)}")
        positions = pc.positions if center is None else pc.positions - center
        neighbors = torch.as_tensor(knn_positions(positions, positions, k))
        return self(ops.as_tensor(positions), ops.as_tensor(pc.normals), neighbors)


def encoder_forward(model: PointEncoder, pc: PointCloud, k: int = None) -> torch.Tensor:
    """Features f_i for every point of pc"""
    return model.encode(pc, k=k)
