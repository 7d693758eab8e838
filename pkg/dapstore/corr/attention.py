import torch
import torch.nn as nn

from dapstore.exceptions import ConfigError, ShapeError, SizeError
from dapstore.geom import knn_positions
from dapstore.tensor import ops


class GroupedVectorAttention(nn.Module):
    """
    Vector attention over each query point's k nearest key points.

    The relation q - k + pe(dp) of every neighbor is collapsed to one logit per
    channel group; groups are softmax-normalized over the neighbors and weight
    their own contiguous slice of the value channels.

    Args:
        embed_channels: token width
        groups: number of channel groups, must divide embed_channels
        k: neighbors per query point
    """

    def __init__(self, embed_channels: int, groups: int, k: int):
        super().__init__()
        if groups < 1 or embed_channels % groups:
            raise ConfigError(f"gva groups ({groups}) must divide token_dim ({embed_channels})")
        if k < 1:
            raise ConfigError(f"gva k must be positive, got {k}")
        self.embed_channels = embed_channels
        self.groups = groups
        self.k = k

        self.linear_q = nn.Sequential(
            nn.Linear(embed_channels, embed_channels),
            nn.ReLU(inplace=False),
        )
        self.linear_k = nn.Sequential(
            nn.Linear(embed_channels, embed_channels),
            nn.ReLU(inplace=False),
        )
        self.linear_v = nn.Linear(embed_channels, embed_channels)
        self.linear_p_bias = nn.Sequential(
            nn.Linear(3, embed_channels),
            nn.ReLU(inplace=False),
            nn.Linear(embed_channels, embed_channels),
        )
        self.weight_encoding = nn.Sequential(
            nn.Linear(embed_channels, groups),
            nn.ReLU(inplace=False),
            nn.Linear(groups, groups),
        )
        self.norm = nn.LayerNorm(embed_channels)

    def forward(self, query_feat, key_feat, query_coord, key_coord, reference_index):
        """
        input: query_feat: [n, c], key_feat: [m, c], query_coord: [n, 3],
               key_coord: [m, 3], reference_index: [n, k]
        output: feat: [n, c]
        """
        query = self.linear_q(query_feat)  # [n, c]
        key = ops.gather_rows(self.linear_k(key_feat), reference_index)  # [n, k, c]
        value = ops.gather_rows(self.linear_v(key_feat), reference_index)  # [n, k, c]
        pos = ops.sub(ops.gather_rows(key_coord, reference_index), query_coord.unsqueeze(1))  # [n, k, 3]

        relation_qk = query.unsqueeze(1) - key + self.linear_p_bias(pos)
        weight = ops.softmax(self.weight_encoding(relation_qk), dim=1)  # [n, k, g]

        n, k, c = value.shape
        value = value.view(n, k, self.groups, c // self.groups)
        out = torch.einsum("nsgi,nsg->ngi", value, weight).reshape(n, c)
        return self.norm(ops.add(query_feat, out))


def gva_attention(layer: GroupedVectorAttention, query_tokens, key_tokens, query_positions,
                  key_positions) -> torch.Tensor:
    """
    Refine query tokens by attending to key tokens; groups are the layer.k
    nearest key positions of each query position.

    Raises:
        ShapeError: token widths differ
        SizeError: fewer key points than layer.k
    """
    if query_tokens.shape[-1] != key_tokens.shape[-1]:
        raise ShapeError(
            f"gva: query tokens {tuple(query_tokens.shape)} and key tokens {tuple(key_tokens.shape)} differ in width")
    if key_tokens.shape[0] < layer.k:
        raise SizeError(f"gva needs at least {layer.k} key points, got {key_tokens.shape[0]}")
    query_positions = ops.as_tensor(query_positions)
    key_positions = ops.as_tensor(key_positions)
    reference_index = torch.as_tensor(knn_positions(query_positions.numpy(), key_positions.numpy(), layer.k))
    return layer(query_tokens, key_tokens, query_positions, key_positions, reference_index)
