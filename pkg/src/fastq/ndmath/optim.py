"""Adam with bias correction and Polyak target averaging."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, param: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), **hyper)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """Return the updated parameter array; ``state`` is advanced in place."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ValueError(f"adam_step shape mismatch: param {param.shape}, grad {grad.shape}")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def polyak_update(target: np.ndarray, online: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise ``tau * online + (1 - tau) * target``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    if target.shape != online.shape:
        raise ValueError(f"polyak shape mismatch: {target.shape} vs {online.shape}")
    return tau * online + (1.0 - tau) * target


class Adam:
    """One :class:`AdamState` per named parameter."""

    def __init__(self, named_params: Iterable[tuple[str, Tensor]], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: dict[str, Tensor] = dict(named_params)
        self.hyper = dict(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self.states = {k: AdamState.like(p.data, **self.hyper) for k, p in self.params.items()}

    def set_lr(self, lr: float) -> None:
        self.hyper["lr"] = lr
        for st in self.states.values():
            st.lr = lr

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        # params without a gradient this round still advance (zero grad)
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.data = adam_step(p.data, g, self.states[name])

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for name, st in self.states.items():
            out[f"{prefix}{name}.m"] = st.m
            out[f"{prefix}{name}.v"] = st.v
            out[f"{prefix}{name}.step"] = np.array([st.step], dtype=np.float64)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str) -> None:
        for name, st in self.states.items():
            st.m = np.array(arrays[f"{prefix}{name}.m"])
            st.v = np.array(arrays[f"{prefix}{name}.v"])
            st.step = int(arrays[f"{prefix}{name}.step"][0])
