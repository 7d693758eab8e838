"""
Backward pass and finite-difference gradient checking.

Gradients accumulate into ``.grad`` the way torch does: running backward twice
on a retained graph doubles them. Parameters the loss does not reach get a
zero gradient rather than None so the optimizer treats them uniformly.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
import torch

from dapstore.exceptions import NumericError, ShapeError, StateError

logger = logging.getLogger(__name__)

REL_ERR_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    """Result of comparing autograd gradients with central differences"""
    max_rel_err: float
    passed: bool
    checked: int
    tol: float

    def __str__(self):
        state = "pass" if self.passed else "FAIL"
        return f"grad check {state}: max_rel_err={self.max_rel_err:.3e} over {self.checked} entries (tol {self.tol})"


def backward(loss: torch.Tensor, params: Optional[Iterable[torch.Tensor]] = None,
             retain_graph: bool = False):
    """
    Populate gradients of every reachable trainable tensor.

    Args:
        loss: scalar tensor with a graph
        params: tensors that must hold a gradient afterwards; unreached ones get zeros
        retain_graph: keep the graph for another backward call

    Raises:
        ShapeError: if loss is not a scalar
        StateError: if loss carries no graph
    """
    if loss.numel() != 1 or loss.dim() > 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    if not loss.requires_grad:
        raise StateError("loss does not depend on any trainable tensor")
    loss.reshape(()).backward(retain_graph=retain_graph)
    for param in params or ():
        if param.grad is None:
            param.grad = torch.zeros_like(param)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_ERR_FLOOR)
    return np.abs(analytic - numeric) / denominator


def _scalar(value: torch.Tensor) -> float:
    result = float(value.detach().reshape(()))
    if not np.isfinite(result):
        raise NumericError(f"function value is not finite ({result})")
    return result


def grad_check(f: Callable[[torch.Tensor], torch.Tensor], x, h: float = 1e-5,
               tol: float = 1e-4) -> GradCheckReport:
    """
    Compare d f / d x from backward() with central differences
    (f(x + h e_i) - f(x - h e_i)) / 2h for every entry of x.

    Raises:
        NumericError: if f(x) is not finite
    """
    base = torch.as_tensor(x, dtype=torch.float64).detach().clone()
    point = base.clone().requires_grad_(True)
    value = f(point)
    _scalar(value)
    backward(value, [point])
    analytic = point.grad.detach().numpy().reshape(-1).copy()

    numeric = np.empty_like(analytic)
    flat = base.reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            original = float(flat[i])
            flat[i] = original + h
            plus = _scalar(f(base))
            flat[i] = original - h
            minus = _scalar(f(base))
            flat[i] = original
            numeric[i] = (plus - minus) / (2.0 * h)

    errors = _relative_error(analytic, numeric)
    max_err = float(errors.max()) if errors.size else 0.0
    return GradCheckReport(max_err, max_err < tol, int(errors.size), tol)


def grad_check_module(f: Callable[[], torch.Tensor], params, h: float = 1e-5, tol: float = 1e-4,
                      max_entries: Optional[int] = None, seed: int = 0) -> GradCheckReport:
    """
    Gradient check of a scalar closure with respect to named parameters.

    Args:
        f: closure recomputing the loss from the current parameter values
        params: ParamStore, nn.Module or mapping name -> tensor
        max_entries: check at most this many entries per tensor (a seeded subset)
        seed: seed of the subset selection
    """
    if hasattr(params, "named_parameters"):
        named = list(params.named_parameters())
    else:
        named = list(params.items())
    tensors = [p for _, p in named]

    for p in tensors:
        p.grad = None
    value = f()
    _scalar(value)
    backward(value, tensors)

    generator = torch.Generator().manual_seed(seed)
    errors = []
    for name, param in named:
        analytic = param.grad.detach().reshape(-1).clone()
        flat = param.data.reshape(-1)
        entries = torch.arange(flat.numel())
        if max_entries is not None and flat.numel() > max_entries:
            entries = torch.randperm(flat.numel(), generator=generator)[:max_entries]
        with torch.no_grad():
            for i in entries.tolist():
                original = float(flat[i])
                flat[i] = original + h
                plus = _scalar(f())
                flat[i] = original - h
                minus = _scalar(f())
                flat[i] = original
                numeric = (plus - minus) / (2.0 * h)
                err = _relative_error(np.array([float(analytic[i])]), np.array([numeric]))[0]
                if err >= tol:
                    logger.debug(f"{name}[{i}]: analytic {float(analytic[i]):.6e} numeric {numeric:.6e}")
                errors.append(err)

    for p in tensors:
        p.grad = None
    max_err = float(max(errors)) if errors else 0.0
    return GradCheckReport(max_err, max_err < tol, len(errors), tol)
