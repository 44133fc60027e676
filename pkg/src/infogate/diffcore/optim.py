"""Adam with bias correction."""

from dataclasses import dataclass, field
from typing import Dict, Iterable

import numpy as np

from ..errors import ShapeError, ValidationError
from .params import ParamSet


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValidationError(f"Adam betas must lie in (0, 1) (got {self.beta1}, {self.beta2})")
        if self.lr <= 0 or self.eps <= 0:
            raise ValidationError(f"Adam lr and eps must be positive (got lr={self.lr}, eps={self.eps})")

    @classmethod
    def for_params(cls, params: ParamSet, **hyper) -> "AdamState":
        state = cls(**hyper)
        for name, tensor in params.trainable():
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        return state


def adam_step(params: ParamSet, state: AdamState) -> None:
    """Apply one Adam update in place and clear gradients.

    A parameter whose gradient is absent or identically zero keeps its value;
    only its moments decay.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t

    for name, tensor in params.trainable():
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        if m.shape != tensor.shape or v.shape != tensor.shape:
            raise ShapeError("adam_step", tensor.shape, m.shape, detail=f"moments drifted for '{name}'")
        grad = tensor.grad
        if grad is None or not np.any(grad):
            m *= b1
            v *= b2
            continue
        m *= b1
        m += (1 - b1) * grad
        v *= b2
        v += (1 - b2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        tensor.data = (tensor.data - step).astype(tensor.data.dtype, copy=False)

    params.zero_grad()


def adam_step_all(pairs: Iterable) -> None:
    for params, state in pairs:
        adam_step(params, state)
