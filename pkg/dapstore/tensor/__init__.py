from . import ops
from .autodiff import GradCheckReport, backward, grad_check, grad_check_module
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import AdamState, ParamStore, adam_step

__all__ = [
    "ops", "GradCheckReport", "backward", "grad_check", "grad_check_module",
    "load_checkpoint", "save_checkpoint", "AdamState", "ParamStore", "adam_step",
]
