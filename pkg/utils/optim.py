"""
Adam Optimizer
Bias-corrected Adam over named parameter tensors
"""

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from utils.errors import ConfigError, NonFiniteGradientError
from utils.tensor import Tensor


@dataclass
class AdamState:
    """Hyper-parameters, step count and moment buffers"""
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"Adam learning rate must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")


def adam_step(
    params: Dict[str, Tensor],
    grads: Dict[str, Optional[np.ndarray]],
    state: AdamState,
) -> Dict[str, Tensor]:
    """
    Apply one Adam update in place

    Args:
        params: Parameter tensors keyed by name
        grads: Gradients keyed by the same names (None = no gradient this step)
        state: Optimizer state, advanced by one step

    Returns:
        The updated parameter dict
    """
    for name, grad in grads.items():
        if grad is not None and not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(name)

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v

        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.data = (param.data - update).astype(param.data.dtype, copy=False)

    return params


class Adam:
    """Adam bound to a model's named parameters"""

    def __init__(self, params: Dict[str, Tensor], lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()

    def step(self):
        grads = {name: p.grad for name, p in self.params.items()}
        adam_step(self.params, grads, self.state)
