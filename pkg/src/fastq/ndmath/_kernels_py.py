"""Pure-numpy LSTM sequence kernels (fallback for the compiled extension).

Gate layout along the 4H axis is (input, forget, candidate, output). ``mask``
marks real steps; on a masked-out step the state is carried through unchanged,
so left-padded windows behave exactly like the unpadded history.
"""
import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(x, mask, W, U, b):
    """Run the LSTM over ``x[B, T, I]`` from a zero state.

    Returns ``(h_final, cache)``; ``cache`` feeds :func:`lstm_backward`.
    """
    B, T, I = x.shape
    H = U.shape[1]
    xw = (x.reshape(B * T, I) @ W.T).reshape(B, T, 4 * H) + b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    h_prev = np.empty((B, T, H))
    c_prev = np.empty((B, T, H))
    gates = np.empty((B, T, 4 * H))
    c_new = np.empty((B, T, H))
    for t in range(T):
        h_prev[:, t] = h
        c_prev[:, t] = c
        z = xw[:, t] + h @ U.T
        ifo = _sigmoid(z[:, np.r_[0:2 * H, 3 * H:4 * H]])
        g = np.tanh(z[:, 2 * H:3 * H])
        i, f, o = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 2 * H:]
        cn = f * c + i * g
        hn = o * np.tanh(cn)
        gates[:, t, :H] = i
        gates[:, t, H:2 * H] = f
        gates[:, t, 2 * H:3 * H] = g
        gates[:, t, 3 * H:] = o
        c_new[:, t] = cn
        m = mask[:, t, None] > 0
        c = np.where(m, cn, c)
        h = np.where(m, hn, h)
    return h, (x, mask, W, U, h_prev, c_prev, gates, c_new)


def lstm_backward(dh_final, cache, need_dx=False):
    """Gradients ``(dx, dW, dU, db)`` given d(loss)/d(h_final)."""
    x, mask, W, U, h_prev, c_prev, gates, c_new = cache
    B, T, I = x.shape
    H = U.shape[1]
    dz_all = np.zeros((B, T, 4 * H))
    dU = np.zeros_like(U)
    dh = dh_final.copy()
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        m = mask[:, t, None] > 0
        i = gates[:, t, :H]
        f = gates[:, t, H:2 * H]
        g = gates[:, t, 2 * H:3 * H]
        o = gates[:, t, 3 * H:]
        tc = np.tanh(c_new[:, t])
        dct = dc + dh * o * (1.0 - tc * tc)
        dz = np.empty((B, 4 * H))
        dz[:, :H] = dct * g * i * (1.0 - i)
        dz[:, H:2 * H] = dct * c_prev[:, t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dct * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dz *= m
        dz_all[:, t] = dz
        dU += dz.T @ h_prev[:, t]
        dh = np.where(m, dz @ U, dh)
        dc = np.where(m, dct * f, dc)
    flat = dz_all.reshape(B * T, 4 * H)
    dW = flat.T @ x.reshape(B * T, I)
    db = flat.sum(axis=0)
    dx = (flat @ W).reshape(B, T, I) if need_dx else None
    return dx, dW, dU, db
