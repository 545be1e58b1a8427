"""
Optimizer Module

Bias-corrected Adam applied in place to named parameter arrays.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .exceptions import DimensionMismatchError, NonFiniteGradientError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First and second moment estimates per parameter name, plus the step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """
    Apply one Adam update to every parameter in ``params``.

    Gradients are validated before anything is modified, so a non-finite
    gradient leaves parameters and state untouched.

    Raises:
        NonFiniteGradientError: If a gradient holds NaN or infinity
        DimensionMismatchError: If a gradient does not match its parameter
    """
    for name, param in params.items():
        grad = grads[name]
        if np.shape(grad) != param.shape:
            raise DimensionMismatchError(param.shape, np.shape(grad), f"gradient of '{name}'")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(name)

    state.step += 1
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step
    step_size = lr / bias1

    for name, param in params.items():
        grad = np.asarray(grads[name], dtype=param.dtype)
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)

        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * (grad * grad)

        denom = np.sqrt(v / bias2) + eps
        param -= (step_size * m / denom).astype(param.dtype, copy=False)
