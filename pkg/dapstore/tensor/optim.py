import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterator, Tuple

import torch
import torch.nn as nn

from dapstore.exceptions import ConfigError, FormatError, StateError

logger = logging.getLogger(__name__)


class ParamStore:
    """
    Named trainable tensors in a fixed iteration order.

    Built from an nn.Module the store shares storage with the module, so an
    optimizer step on the store updates the network in place.
    """

    def __init__(self, params=None):
        self._params: "OrderedDict[str, nn.Parameter]" = OrderedDict()
        for name, value in (params or {}).items():
            self.add(name, value)

    @classmethod
    def from_module(cls, module: nn.Module) -> "ParamStore":
        return cls(OrderedDict(module.named_parameters()))

    def add(self, name: str, value) -> nn.Parameter:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name '{name}'")
        if not isinstance(value, nn.Parameter):
            value = nn.Parameter(torch.as_tensor(value, dtype=torch.float64).clone())
        if not value.requires_grad:
            raise ConfigError(f"parameter '{name}' is not trainable")
        self._params[name] = value
        return value

    def __getitem__(self, name: str) -> nn.Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def zero_grad(self):
        for param in self._params.values():
            param.grad = None

    def load_into(self, module: nn.Module):
        """
        Copy stored values into module's parameters.

        Raises:
            FormatError: on missing, unexpected or mis-shaped entries
        """
        targets = OrderedDict(module.named_parameters())
        missing = [name for name in targets if name not in self._params]
        unexpected = [name for name in self._params if name not in targets]
        if missing or unexpected:
            raise FormatError(f"checkpoint does not fit the model: missing {missing}, unexpected {unexpected}")
        with torch.no_grad():
            for name, target in targets.items():
                source = self._params[name]
                if source.shape != target.shape:
                    raise FormatError(
                        f"shape mismatch for '{name}': checkpoint {tuple(source.shape)} vs model {tuple(target.shape)}")
                target.copy_(source)


@dataclass
class AdamState:
    """
    Adam optimizer state over a ParamStore (torch.optim.Adam underneath).
    """
    params: ParamStore
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    step_count: int = 0
    optimizer: torch.optim.Adam = field(init=False, repr=False)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"Adam betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        self.optimizer = torch.optim.Adam(
            list(self.params.values()), lr=self.lr, betas=(self.beta1, self.beta2),
            eps=self.eps_adam, foreach=False)

    def moments(self, name: str) -> Tuple[torch.Tensor, torch.Tensor]:
        """First and second moment estimates of a parameter (zeros before the first step)"""
        param = self.params[name]
        state = self.optimizer.state.get(param, {})
        if "exp_avg" not in state:
            return torch.zeros_like(param), torch.zeros_like(param)
        return state["exp_avg"], state["exp_avg_sq"]

    def moment_shapes(self) -> Dict[str, tuple]:
        return {name: tuple(self.moments(name)[0].shape) for name in self.params}


def adam_step(params: ParamStore, state: AdamState):
    """
    Apply one bias-corrected Adam update, then zero every gradient.

    Raises:
        StateError: if a parameter has no gradient
    """
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise StateError(f"parameters without gradients: {missing}")
    state.optimizer.step()
    state.step_count += 1
    with torch.no_grad():
        for param in params.values():
            param.grad.zero_()
