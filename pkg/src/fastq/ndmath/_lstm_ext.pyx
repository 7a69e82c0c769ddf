# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM sequence kernels; same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sig(double v) noexcept nogil:
    return 1.0 / (1.0 + exp(-v))


cdef inline double _tanh(double v) noexcept nogil:
    return 2.0 / (1.0 + exp(-2.0 * v)) - 1.0


cdef inline void _gemm_abt(double* a, double* b, double* c, int m, int n, int k,
                           double beta) noexcept nogil:
    # row-major c[m, n] = a[m, k] @ b[n, k]^T + beta * c
    cdef char ta = b'T'
    cdef char tb = b'N'
    cdef double alpha = 1.0
    dgemm(&ta, &tb, &n, &m, &k, &alpha, b, &k, a, &k, &beta, c, &n)


cdef inline void _gemm_ab(double* a, double* b, double* c, int m, int n, int k,
                          double beta) noexcept nogil:
    # row-major c[m, n] = a[m, k] @ b[k, n] + beta * c
    cdef char ta = b'N'
    cdef char tb = b'N'
    cdef double alpha = 1.0
    dgemm(&ta, &tb, &n, &m, &k, &alpha, b, &n, a, &k, &beta, c, &n)


def lstm_forward(x, mask, W, U, b):
    cdef int B = x.shape[0]
    cdef int T = x.shape[1]
    cdef int H = U.shape[1]
    cdef int G = 4 * H
    xt = np.ascontiguousarray(np.transpose(x, (1, 0, 2)))
    mt = np.ascontiguousarray(np.transpose(mask, (1, 0)), dtype=np.float64)
    Uc = np.ascontiguousarray(U)
    # time-major pre-activations, overwritten in place by the gate values;
    # cn holds tanh of the new cell state
    z_arr = (xt.reshape(T * B, -1) @ W.T + b).reshape(T, B, G)
    z_arr = np.ascontiguousarray(z_arr)
    hp_arr = np.zeros((T, B, H))
    cp_arr = np.zeros((T, B, H))
    cn_arr = np.zeros((T, B, H))
    h_arr = np.zeros((B, H))
    c_arr = np.zeros((B, H))
    cdef double[:, :, ::1] z = z_arr
    cdef double[:, :, ::1] hp = hp_arr
    cdef double[:, :, ::1] cp = cp_arr
    cdef double[:, :, ::1] cn = cn_arr
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] Um = Uc
    cdef double[:, ::1] m = mt
    cdef int t, r, j
    cdef double gi, gf, gg, go, cv, hv, tc
    with nogil:
        for t in range(T):
            for r in range(B):
                for j in range(H):
                    hp[t, r, j] = h[r, j]
                    cp[t, r, j] = c[r, j]
            _gemm_abt(&h[0, 0], &Um[0, 0], &z[t, 0, 0], B, G, H, 1.0)
            for r in range(B):
                for j in range(H):
                    gi = _sig(z[t, r, j])
                    gf = _sig(z[t, r, H + j])
                    gg = _tanh(z[t, r, 2 * H + j])
                    go = _sig(z[t, r, 3 * H + j])
                    z[t, r, j] = gi
                    z[t, r, H + j] = gf
                    z[t, r, 2 * H + j] = gg
                    z[t, r, 3 * H + j] = go
                    cv = gf * c[r, j] + gi * gg
                    tc = _tanh(cv)
                    hv = go * tc
                    cn[t, r, j] = tc
                    if m[t, r] > 0:
                        c[r, j] = cv
                        h[r, j] = hv
    return h_arr, (xt, mt, W, Uc, hp_arr, cp_arr, z_arr, cn_arr)


def lstm_backward(dh_final, cache, need_dx=False):
    xt, mt, W, Uc, hp_arr, cp_arr, g_arr, cn_arr = cache
    cdef int T = xt.shape[0]
    cdef int B = xt.shape[1]
    cdef int I = xt.shape[2]
    cdef int H = Uc.shape[1]
    cdef int G = 4 * H
    dz_arr = np.zeros((T, B, G))
    dh_arr = np.array(dh_final, dtype=np.float64, order="C", copy=True)
    dc_arr = np.zeros((B, H))
    dhn_arr = np.zeros((B, H))
    cdef double[:, :, ::1] dz = dz_arr
    cdef double[:, :, ::1] gt = g_arr
    cdef double[:, :, ::1] cp = cp_arr
    cdef double[:, :, ::1] cn = cn_arr
    cdef double[:, ::1] dh = dh_arr
    cdef double[:, ::1] dc = dc_arr
    cdef double[:, ::1] dhn = dhn_arr
    cdef double[:, ::1] Um = Uc
    cdef double[:, ::1] m = mt
    cdef int t, r, j
    cdef double gi, gf, gg, go, tc, dct
    with nogil:
        for t in range(T - 1, -1, -1):
            for r in range(B):
                if m[t, r] <= 0:
                    continue
                for j in range(H):
                    gi = gt[t, r, j]
                    gf = gt[t, r, H + j]
                    gg = gt[t, r, 2 * H + j]
                    go = gt[t, r, 3 * H + j]
                    tc = cn[t, r, j]
                    dct = dc[r, j] + dh[r, j] * go * (1.0 - tc * tc)
                    dz[t, r, j] = dct * gg * gi * (1.0 - gi)
                    dz[t, r, H + j] = dct * cp[t, r, j] * gf * (1.0 - gf)
                    dz[t, r, 2 * H + j] = dct * gi * (1.0 - gg * gg)
                    dz[t, r, 3 * H + j] = dh[r, j] * tc * go * (1.0 - go)
                    dc[r, j] = dct * gf
            _gemm_ab(&dz[t, 0, 0], &Um[0, 0], &dhn[0, 0], B, H, G, 0.0)
            for r in range(B):
                if m[t, r] > 0:
                    for j in range(H):
                        dh[r, j] = dhn[r, j]
    flat = dz_arr.reshape(T * B, G)
    dU = flat.T @ hp_arr.reshape(T * B, H)
    dW = flat.T @ xt.reshape(T * B, I)
    db = flat.sum(axis=0)
    dx = None
    if need_dx:
        dx = np.ascontiguousarray(np.transpose((flat @ W).reshape(T, B, I), (1, 0, 2)))
    return dx, dW, dU, db
