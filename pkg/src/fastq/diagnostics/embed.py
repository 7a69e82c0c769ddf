"""Autoencoder embedding of feature vectors into two dimensions."""
from __future__ import annotations

import numpy as np

from ..ndmath import Adam, Tensor, mean, no_grad, square, tanh, tsum
from ..nn import Linear, Module
from ..rng import substream

MIN_STATES = 10


class AutoEncoder(Module):
    def __init__(self, n_in: int, rng: np.random.Generator, code: int = 2):
        self.enc = Linear(n_in, code, rng)
        self.dec = Linear(code, n_in, rng)

    def encode(self, x) -> Tensor:
        return tanh(self.enc(x))

    def __call__(self, x) -> Tensor:
        return self.dec(self.encode(x))


def embed_2d(states, seed: int, epochs: int = 300, lr: float = 1e-2,
             batch_size: int = 256) -> tuple[np.ndarray, list[float]]:
    """Train a 12 -> 2 -> 12 autoencoder; returns the codes and the per-epoch loss."""
    x = np.asarray(states, dtype=np.float64)
    if x.ndim != 2 or len(x) < MIN_STATES:
        raise ValueError(f"embed_2d needs at least {MIN_STATES} states")
    ae = AutoEncoder(x.shape[1], substream(seed, "ae-init"))
    opt = Adam(ae.named_parameters(), lr=lr)
    rng = substream(seed, "ae-batch")
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(x), batch_size):
            xb = Tensor(x[order[s:s + batch_size]])
            opt.zero_grad()
            loss = mean(tsum(square(ae(xb) - xb), axis=-1))
            loss.backward()
            opt.step()
            total += float(loss.data) * xb.shape[0]
        losses.append(total / len(x))
    with no_grad():
        codes = ae.encode(Tensor(x)).data
    return codes, losses
