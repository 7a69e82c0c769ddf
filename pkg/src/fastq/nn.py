"""Parameter containers for the tape-based layers."""
from __future__ import annotations

import copy

import numpy as np

from .ndmath import Tensor, dense, relu, tanh


class Module:
    """Collects :class:`Tensor` parameters from attributes, in definition order."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.named_parameters():
            if k not in state:
                raise KeyError(f"missing parameter {k!r}")
            if state[k].shape != p.data.shape:
                raise ValueError(f"parameter {k!r}: shape {state[k].shape} != {p.data.shape}")
            p.data = np.array(state[k], dtype=np.float64)

    def clone(self):
        return copy.deepcopy(self)


def uniform_param(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.W = uniform_param(rng, (n_out, n_in), bound)
        self.b = uniform_param(rng, (n_out,), bound)

    def __call__(self, x) -> Tensor:
        return dense(x, self.W, self.b)


class MLP(Module):
    """Dense stack with a hidden activation between layers (none after the last)."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, activation: str = "relu"):
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.activation = activation

    def __call__(self, x) -> Tensor:
        act = relu if self.activation == "relu" else tanh
        for k, layer in enumerate(self.layers):
            x = layer(x)
            if k < len(self.layers) - 1:
                x = act(x)
        return x
