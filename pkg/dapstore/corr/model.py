"""
Correspondence network between a cropped container region and the object.

Object tokens are the queries: every block refines them with self-attention,
lets them attend to the container, then lets the container attend back.
The head scores every (object point, container point) pair with a scaled
dot product squashed by a sigmoid.
"""
import logging
import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from dapstore.exceptions import ConfigError, SizeError
from dapstore.afford.encoder import PointEncoder
from dapstore.geom import PointCloud
from dapstore.labeling import CorrespondenceMatrix
from dapstore.tensor import ops
from .attention import GroupedVectorAttention, gva_attention

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CorrConfig:
    token_dim: int = 64
    num_blocks: int = 2
    gva_k: int = 8
    gva_groups: int = 8
    gamma: float = 2.0
    match_threshold: float = 0.5
    encoder_k: int = 8

    def __post_init__(self):
        for name in ("token_dim", "num_blocks", "gva_k", "gva_groups", "encoder_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"corr.{name} must be positive, got {getattr(self, name)}")
        if self.token_dim % self.gva_groups:
            raise ConfigError(
                f"corr.token_dim ({self.token_dim}) must be divisible by gva_groups ({self.gva_groups})")
        if self.gamma < 0:
            raise ConfigError(f"corr.gamma must be non-negative, got {self.gamma}")
        if not 0 < self.match_threshold < 1:
            raise ConfigError(f"corr.match_threshold must lie in (0, 1), got {self.match_threshold}")

    @property
    def min_points(self) -> int:
        return max(self.gva_k, self.encoder_k)


class CorrBlock(nn.Module):
    def __init__(self, dim: int, groups: int, k: int):
        super().__init__()
        self.object_self = GroupedVectorAttention(dim, groups, k)
        self.object_cross = GroupedVectorAttention(dim, groups, k)
        self.container_cross = GroupedVectorAttention(dim, groups, k)

    def forward(self, f_o, f_c, p_o, p_c):
        f_o = gva_attention(self.object_self, f_o, f_o, p_o, p_o)
        f_o = gva_attention(self.object_cross, f_o, f_c, p_o, p_c)
        f_c = gva_attention(self.container_cross, f_c, f_o, p_c, p_o)
        return f_o, f_c


class CorrespondenceNet(nn.Module):
    def __init__(self, cfg: CorrConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = PointEncoder(cfg.token_dim, cfg.encoder_k)
        self.blocks = nn.ModuleList([
            CorrBlock(cfg.token_dim, cfg.gva_groups, cfg.gva_k) for _ in range(cfg.num_blocks)
        ])
        ops.xavier_init(self)

    def logits(self, container: PointCloud, obj: PointCloud) -> torch.Tensor:
        """(N_O, N_C) scaled dot products before the sigmoid"""
        for name, pc in (("container crop", container), ("object", obj)):
            if len(pc) < self.cfg.min_points:
                raise SizeError(f"{name} has {len(pc)} points, need at least {self.cfg.min_points}")

        # each cloud is expressed around its own centroid
        c_center, o_center = container.centroid(), obj.centroid()
        f_c = self.encoder.encode(container, center=c_center)
        f_o = self.encoder.encode(obj, center=o_center)
        p_c = ops.as_tensor(container.positions - c_center)
        p_o = ops.as_tensor(obj.positions - o_center)

        for block in self.blocks:
            f_o, f_c = block(f_o, f_c, p_o, p_c)
        return ops.matmul(f_o, f_c.transpose(0, 1)) / math.sqrt(self.cfg.token_dim)

    def forward(self, container: PointCloud, obj: PointCloud) -> torch.Tensor:
        return ops.sigmoid(self.logits(container, obj))

    def predict(self, container: PointCloud, obj: PointCloud) -> CorrespondenceMatrix:
        with torch.no_grad():
            return CorrespondenceMatrix(self(container, obj).numpy())


def build_corr_model(cfg: CorrConfig, seed: int) -> CorrespondenceNet:
    """Seeded float64 model; the global torch RNG is left untouched"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed % (2 ** 63))
        model = CorrespondenceNet(cfg).double()
    return model


def corr_forward(model, cropped_container: PointCloud, obj: PointCloud, cfg: CorrConfig = None) -> CorrespondenceMatrix:
    """C_phi for every object/container pair of points"""
    if cfg is not None and getattr(model, "cfg", cfg) != cfg:
        logger.warning("corr_forward: config differs from the one the model was built with")
    matrix = model.predict(cropped_container, obj)
    matrix.check_matches(len(obj), len(cropped_container))
    return matrix
