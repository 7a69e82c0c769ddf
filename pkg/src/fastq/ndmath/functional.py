"""Network layers built on the tape: dense, LSTM, softmax, GRL, dropout."""
from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import Tensor, as_tensor, concat, make, mul, sigmoid, tanh, add

PROB_FLOOR = 1e-8


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def dense(x, W, b=None) -> Tensor:
    """``y = W x + b`` for ``x`` of shape ``[in]`` or ``[batch, in]``."""
    x, W = as_tensor(x), as_tensor(W)
    _check(W.ndim == 2, f"weight must be 2-D, got shape {W.shape}")
    _check(x.shape[-1] == W.shape[1], f"dense: input dim {x.shape[-1]} != weight in-dim {W.shape[1]}")
    parents = [x, W]
    if b is not None:
        b = as_tensor(b)
        _check(b.shape == (W.shape[0],), f"dense: bias shape {b.shape} != ({W.shape[0]},)")
        parents.append(b)
    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data

    def _bw(g):
        if x.requires_grad:
            x._accum(g @ W.data)
        if W.requires_grad:
            W._accum(np.outer(g, x.data) if x.ndim == 1 else g.T @ x.data)
        if b is not None and b.requires_grad:
            b._accum(g if g.ndim == 1 else g.sum(axis=0))

    return make(out, parents, _bw, "dense")


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _check(x.shape[axis] >= 1, "softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        x._accum(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return make(s, (x,), _bw, "softmax")


def cross_entropy(pred, labels) -> Tensor:
    """``-log(pred[label])`` with the probability clamped to ``[1e-8, 1]``.

    ``pred`` is ``[k]`` with an int label, or ``[batch, k]`` with an int array;
    the batched form returns per-row losses.
    """
    pred = as_tensor(pred)
    labels = np.asarray(labels, dtype=np.int64)
    k = pred.shape[-1]
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"label out of range for {k} classes")
    if pred.ndim == 1:
        idx = (int(labels),)
    else:
        idx = (np.arange(pred.shape[0]), labels)
    p = pred.data[idx]
    pc = np.clip(p, PROB_FLOOR, 1.0)
    live = p > PROB_FLOOR

    def _bw(g):
        full = np.zeros_like(pred.data)
        full[idx] = -g * live / pc
        pred._accum(full)

    return make(-np.log(pc), (pred,), _bw, "cross_entropy")


def grl(x, lambda_grl: float = 1.0) -> Tensor:
    """Identity forward; the backward pass scales the gradient by ``-lambda_grl``."""
    if lambda_grl < 0:
        raise ValueError("lambda_grl must be >= 0")
    x = as_tensor(x)
    return make(x.data, (x,), lambda g: x._accum(-lambda_grl * g), "grl")


def dropout(x, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted Bernoulli dropout; survivors are scaled by ``1 / (1 - rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    x = as_tensor(x)
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return make(x.data * keep, (x,), lambda g: x._accum(g * keep), "dropout")


def lstm_cell(x, h_prev, c_prev, W, U, b):
    """One LSTM step from primitive ops; returns ``(h, c)``.

    ``W`` is ``[4H, in]``, ``U`` is ``[4H, H]``, ``b`` is ``[4H]`` with gate
    blocks ordered input, forget, candidate, output.
    """
    h_prev, c_prev, U = as_tensor(h_prev), as_tensor(c_prev), as_tensor(U)
    H = U.shape[1]
    _check(U.shape[0] == 4 * H, f"recurrent weight shape {U.shape} is not [4H, H]")
    _check(h_prev.shape[-1] == H and c_prev.shape[-1] == H, "hidden sizes do not conform")
    z = add(dense(x, W, b), dense(h_prev, U))
    i = sigmoid(z[..., 0:H])
    f = sigmoid(z[..., H:2 * H])
    g = tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:4 * H])
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def lstm_sequence(x, mask, W, U, b) -> Tensor:
    """Final hidden state of an LSTM run over ``x[B, T, I]`` from zero state.

    ``mask[B, T]`` is 1 on real steps; padded steps leave the state unchanged.
    Forward and backward run in one fused kernel (see :mod:`.kernels`).
    """
    x, W, U, b = as_tensor(x), as_tensor(W), as_tensor(U), as_tensor(b)
    _check(x.ndim == 3, f"lstm_sequence expects [B, T, I], got {x.shape}")
    H = U.shape[1]
    _check(W.shape == (4 * H, x.shape[2]), f"input weight shape {W.shape} != {(4 * H, x.shape[2])}")
    _check(U.shape == (4 * H, H) and b.shape == (4 * H,), "recurrent weight/bias shapes do not conform")
    mask = np.asarray(mask, dtype=np.float64)
    _check(mask.shape == x.shape[:2], "mask shape must be [B, T]")
    impl = kernels.current()
    h, cache = impl.lstm_forward(x.data, mask, W.data, U.data, b.data)

    def _bw(g):
        dx, dW, dU, db = impl.lstm_backward(g, cache, need_dx=x.requires_grad)
        if x.requires_grad:
            x._accum(dx)
        W._accum(dW)
        U._accum(dU)
        b._accum(db)

    return make(h, (x, W, U, b), _bw, "lstm_sequence")


__all__ = [
    "dense", "softmax", "cross_entropy", "grl", "dropout", "lstm_cell", "lstm_sequence",
    "concat", "PROB_FLOOR",
]
