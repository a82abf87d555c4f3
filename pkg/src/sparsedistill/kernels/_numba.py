"""Numba-compiled conv/pool kernels.

Convolution gathers patches with a compiled im2col and hands the contraction
to BLAS through ``np.dot``; the scatter back (col2im) and the pooling loops
are plain compiled loops. Reductions run in a fixed order, so results are
reproducible run to run.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _im2col(xpad, kh, kw, stride, ho, wo):
    n_, cin = xpad.shape[0], xpad.shape[1]
    cols = np.empty((n_ * ho * wo, cin * kh * kw), dtype=xpad.dtype)
    for n in range(n_):
        for i in range(ho):
            for j in range(wo):
                row = (n * ho + i) * wo + j
                c = 0
                for ci in range(cin):
                    for a in range(kh):
                        for b in range(kw):
                            cols[row, c] = xpad[n, ci, i * stride + a, j * stride + b]
                            c += 1
    return cols


@njit(cache=True)
def _col2im(dcols, dxpad, kh, kw, stride, ho, wo):
    n_, cin = dxpad.shape[0], dxpad.shape[1]
    for n in range(n_):
        for i in range(ho):
            for j in range(wo):
                row = (n * ho + i) * wo + j
                c = 0
                for ci in range(cin):
                    for a in range(kh):
                        for b in range(kw):
                            dxpad[n, ci, i * stride + a, j * stride + b] += dcols[row, c]
                            c += 1


@njit(cache=True)
def _conv_fwd(xpad, w, stride):
    n_ = xpad.shape[0]
    cout, cin, kh, kw = w.shape
    ho = (xpad.shape[2] - kh) // stride + 1
    wo = (xpad.shape[3] - kw) // stride + 1
    cols = _im2col(xpad, kh, kw, stride, ho, wo)
    y = np.dot(cols, np.ascontiguousarray(w.reshape(cout, cin * kh * kw).T))
    return np.ascontiguousarray(y.reshape(n_, ho, wo, cout).transpose(0, 3, 1, 2))


@njit(cache=True)
def _conv_bwd(xpad, w, g, stride):
    n_ = xpad.shape[0]
    cout, cin, kh, kw = w.shape
    ho, wo = g.shape[2], g.shape[3]
    cols = _im2col(xpad, kh, kw, stride, ho, wo)
    g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n_ * ho * wo, cout)
    dw = np.dot(np.ascontiguousarray(g2.T), cols).reshape(cout, cin, kh, kw)
    dcols = np.dot(g2, w.reshape(cout, cin * kh * kw))
    dxpad = np.zeros_like(xpad)
    _col2im(dcols, dxpad, kh, kw, stride, ho, wo)
    return dxpad, dw


@njit(cache=True)
def _pool_fwd(x, k, out, idx):
    n_, c_, ho, wo = out.shape
    for n in range(n_):
        for c in range(c_):
            for i in range(ho):
                for j in range(wo):
                    best = x[n, c, i * k, j * k]
                    bi = 0
                    for a in range(k):
                        for b in range(k):
                            v = x[n, c, i * k + a, j * k + b]
                            if v > best:
                                best = v
                                bi = a * k + b
                    out[n, c, i, j] = best
                    idx[n, c, i, j] = bi


@njit(cache=True)
def _pool_bwd(g, idx, k, dx):
    n_, c_, ho, wo = g.shape
    for n in range(n_):
        for c in range(c_):
            for i in range(ho):
                for j in range(wo):
                    p = idx[n, c, i, j]
                    dx[n, c, i * k + p // k, j * k + p % k] += g[n, c, i, j]


def conv2d_forward(xpad, w, stride):
    return _conv_fwd(np.ascontiguousarray(xpad), np.ascontiguousarray(w), stride)


def conv2d_backward(xpad, w, g, stride):
    return _conv_bwd(np.ascontiguousarray(xpad), np.ascontiguousarray(w),
                     np.ascontiguousarray(g), stride)


def maxpool2d_forward(x, k):
    n, c, h, w = x.shape
    out = np.empty((n, c, h // k, w // k), dtype=x.dtype)
    idx = np.empty(out.shape, dtype=np.int64)
    _pool_fwd(np.ascontiguousarray(x), k, out, idx)
    return out, idx


def maxpool2d_backward(g, idx, in_shape, k):
    dx = np.zeros(in_shape, dtype=g.dtype)
    _pool_bwd(np.ascontiguousarray(g), idx, k, dx)
    return dx
