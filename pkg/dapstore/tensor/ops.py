"""
Shape-checked float64 tensor operations on top of torch.

The networks build their graphs from these helpers where shapes come from
data (point counts, neighbor groups); torch.autograd records the backward
pass. Shape mismatches raise ShapeError naming both shapes.
"""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from dapstore.exceptions import ShapeError

DTYPE = torch.float64


def as_tensor(values, requires_grad: bool = False) -> torch.Tensor:
    """Copy values into a float64 tensor"""
    tensor = torch.as_tensor(values, dtype=DTYPE).clone()
    if requires_grad:
        tensor.requires_grad_(True)
    return tensor


def _shape(x) -> tuple:
    return tuple(x.shape)


def _broadcast_shape(a: torch.Tensor, b: torch.Tensor, op: str) -> tuple:
    try:
        return tuple(torch.broadcast_shapes(a.shape, b.shape))
    except RuntimeError as e:
        raise ShapeError(f"{op}: incompatible shapes {_shape(a)} and {_shape(b)}") from e


def add(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _broadcast_shape(a, b, "add")
    return a + b


def sub(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _broadcast_shape(a, b, "sub")
    return a - b


def mul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _broadcast_shape(a, b, "mul")
    return a * b


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.dim() < 1 or b.dim() < 1 or a.shape[-1] != b.shape[-2 if b.dim() > 1 else 0]:
        raise ShapeError(f"matmul: incompatible shapes {_shape(a)} and {_shape(b)}")
    return torch.matmul(a, b)


def concat(tensors, dim: int = -1) -> torch.Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: no tensors given")
    first = tensors[0]
    axis = dim % first.dim()
    for other in tensors[1:]:
        if other.dim() != first.dim() or any(
                other.shape[i] != first.shape[i] for i in range(first.dim()) if i != axis):
            raise ShapeError(f"concat: incompatible shapes {_shape(first)} and {_shape(other)}")
    return torch.cat(tensors, dim=dim)


def gather_rows(x: torch.Tensor, index: torch.Tensor) -> torch.Tensor:
    """
    Select rows of x by index; output shape is index.shape + x.shape[1:].
    """
    index = torch.as_tensor(index, dtype=torch.long)
    if index.numel() and (int(index.min()) < 0 or int(index.max()) >= x.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for shape {_shape(x)}")
    return x[index]


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return torch.softmax(x, dim=dim)


def layer_norm(x: torch.Tensor, weight=None, bias=None, eps: float = 1e-5) -> torch.Tensor:
    """Normalize over the last axis, then apply the optional affine"""
    if weight is not None and _shape(weight) != (x.shape[-1],):
        raise ShapeError(f"layer_norm: weight {_shape(weight)} does not match input {_shape(x)}")
    if bias is not None and _shape(bias) != (x.shape[-1],):
        raise ShapeError(f"layer_norm: bias {_shape(bias)} does not match input {_shape(x)}")
    return F.layer_norm(x, (x.shape[-1],), weight, bias, eps)


def silu(x: torch.Tensor) -> torch.Tensor:
    return F.silu(x)


def tanh(x: torch.Tensor) -> torch.Tensor:
    return torch.tanh(x)


def sigmoid(x: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(x)


def reduce_mean(x: torch.Tensor, dim=None) -> torch.Tensor:
    return x.mean() if dim is None else x.mean(dim=dim)


def reduce_sum(x: torch.Tensor, dim=None) -> torch.Tensor:
    return x.sum() if dim is None else x.sum(dim=dim)


def broadcast(x: torch.Tensor, shape) -> torch.Tensor:
    try:
        return x.expand(*shape)
    except RuntimeError as e:
        raise ShapeError(f"broadcast: cannot expand {_shape(x)} to {tuple(shape)}") from e


def xavier_init(module: nn.Module):
    """
    Uniform +-sqrt(6 / (fan_in + fan_out)) weights and zero biases for
    every Linear layer under module.
    """
    for layer in module.modules():
        if isinstance(layer, nn.Linear):
            bound = math.sqrt(6.0 / (layer.in_features + layer.out_features))
            nn.init.uniform_(layer.weight, -bound, bound)
            if layer.bias is not None:
                nn.init.zeros_(layer.bias)


def zero_init(layer: nn.Linear):
    nn.init.zeros_(layer.weight)
    if layer.bias is not None:
        nn.init.zeros_(layer.bias)
