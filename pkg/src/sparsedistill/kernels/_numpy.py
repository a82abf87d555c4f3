"""Pure-numpy conv/pool kernels (im2col via strided windows)."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(xpad, kh, kw, stride):
    # (N, C, H', W', kh, kw) read-only view
    win = sliding_window_view(xpad, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(xpad, w, stride):
    win = _windows(xpad, w.shape[2], w.shape[3], stride)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # N, H', W', Co
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward(xpad, w, g, stride):
    kh, kw = w.shape[2], w.shape[3]
    win = _windows(xpad, kh, kw, stride)
    dw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])).astype(w.dtype, copy=False)
    dxpad = np.zeros_like(xpad)
    ho, wo = g.shape[2], g.shape[3]
    for a in range(kh):
        for b in range(kw):
            contrib = np.tensordot(g, w[:, :, a, b], axes=([1], [0]))  # N, H', W', C
            dxpad[:, :, a:a + stride * (ho - 1) + 1:stride, b:b + stride * (wo - 1) + 1:stride] += \
                contrib.transpose(0, 3, 1, 2)
    return dxpad, dw


def _blocks(x, k):
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    blk = x[:, :, :ho * k, :wo * k].reshape(n, c, ho, k, wo, k)
    return blk.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)


def maxpool2d_forward(x, k):
    blk = _blocks(x, k)
    idx = np.argmax(blk, axis=-1)  # first occurrence on ties
    out = np.take_along_axis(blk, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool2d_backward(g, idx, in_shape, k):
    n, c, h, w = in_shape
    ho, wo = g.shape[2], g.shape[3]
    blk = np.zeros((n, c, ho, wo, k * k), dtype=g.dtype)
    np.put_along_axis(blk, idx[..., None], g[..., None], axis=-1)
    blk = blk.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * k, wo * k)
    dx = np.zeros(in_shape, dtype=g.dtype)
    dx[:, :, :ho * k, :wo * k] = blk
    return dx
