import torch

from dapstore.exceptions import ShapeError
from dapstore.labeling import CorrespondenceMatrix

PROB_CLAMP = 1e-7


def _values(matrix) -> torch.Tensor:
    if isinstance(matrix, CorrespondenceMatrix):
        matrix = matrix.values
    return torch.as_tensor(matrix, dtype=torch.float64)


def focal_loss(pred, label, gamma: float = 2.0) -> torch.Tensor:
    """
    Two-sided binary focal loss, averaged over all entries:
    FL = -[y (1 - p)^gamma log p + (1 - y) p^gamma log(1 - p)]

    Probabilities are clamped to [1e-7, 1 - 1e-7]; gamma = 0 is plain binary
    cross-entropy.

    Args:
        pred: predicted probabilities, tensor or CorrespondenceMatrix
        label: 0/1 targets of the same shape
        gamma: focusing strength, >= 0
    """
    p = _values(pred)
    y = _values(label)
    if p.shape != y.shape:
        raise ShapeError(f"focal_loss: prediction {tuple(p.shape)} vs label {tuple(y.shape)}")
    p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    positive = y * (1.0 - p) ** gamma * torch.log(p)
    negative = (1.0 - y) * p ** gamma * torch.log(1.0 - p)
    return -(positive + negative).mean()
