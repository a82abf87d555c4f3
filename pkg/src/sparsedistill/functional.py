"""Differentiable ops over :class:`~sparsedistill.tensor.Tensor`.

Shapes are strict: the only broadcast is ``add_bias`` along the feature /
channel axis. Elementwise binary ops accept a Tensor, an ndarray of the same
shape, or a Python scalar (the latter two are treated as constants).
"""

import numpy as np

from . import kernels
from .errors import DimensionError, ValidationError
from .tensor import Tensor, make_op


def _const(x, like):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=like.dtype)
    if arr.ndim and arr.shape != like.shape:
        raise DimensionError(f"operand shape {arr.shape} does not match {like.shape}")
    return arr


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise -------------------------------------------------------------

def add(a, b):
    b = _const(b, a)
    if isinstance(b, Tensor):
        _same_shape(a, b, "add")
        return make_op("add", a.data + b.data, (a, b), lambda g: (g, g))
    return make_op("add", a.data + b, (a,), lambda g: (g,))


def sub(a, b):
    b = _const(b, a)
    if isinstance(b, Tensor):
        _same_shape(a, b, "sub")
        return make_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))
    return make_op("sub", a.data - b, (a,), lambda g: (g,))


def neg(a):
    return make_op("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b):
    b = _const(b, a)
    if isinstance(b, Tensor):
        _same_shape(a, b, "mul")
        return make_op("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))
    return make_op("mul", (a.data * b).astype(a.dtype, copy=False), (a,), lambda g: (g * b,))


def exp(a):
    with np.errstate(over="ignore"):  # overflow surfaces as NumericalError in make_op
        out = np.exp(a.data)
    return make_op("exp", out, (a,), lambda g: (g * out,))


def clamp_min(a, lo):
    """max(a, lo); gradient flows only where a > lo."""
    keep = a.data > lo
    out = np.where(keep, a.data, np.asarray(lo, dtype=a.dtype))
    return make_op("clamp_min", out, (a,), lambda g: (g * keep,))


def relu(x):
    keep = x.data > 0  # subgradient at 0 is 0
    return make_op("relu", x.data * keep, (x,), lambda g: (g * keep,))


def sum(a):  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    return make_op("sum", np.asarray(a.data.sum(), dtype=a.dtype), (a,),
                   lambda g: (np.full(shape, g, dtype=a.dtype),))


def mean(a):
    n = a.size
    shape = a.shape
    return make_op("mean", np.asarray(a.data.mean(), dtype=a.dtype), (a,),
                   lambda g: (np.full(shape, g / n, dtype=a.dtype),))


def scale(a, c):
    return mul(a, float(c))


# -- linear algebra and layers ----------------------------------------------

def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return make_op("matmul", a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def add_bias(x, b):
    """Add a per-feature (rank 2) or per-channel (rank 4) bias vector."""
    if b.ndim != 1 or x.ndim not in (2, 4) or x.shape[1] != b.shape[0]:
        raise DimensionError(f"add_bias: bias {b.shape} incompatible with input {x.shape}")
    if x.ndim == 2:
        return make_op("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))
    return make_op("add_bias", x.data + b.data[None, :, None, None], (x, b),
                   lambda g: (g, g.sum(axis=(0, 2, 3))))


def linear(x, w, b=None):
    """``x @ w.T + b`` with ``w`` stored as [out, in]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    wt = w.data.T
    y = make_op("linear", x.data @ wt, (x, w), lambda g: (g @ w.data, g.T @ x.data))
    return add_bias(y, b) if b is not None else y


def conv2d(x, w, stride=1, padding=0):
    """2-D cross-correlation of [N, C_in, H, W] with [C_out, C_in, kh, kw]."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d: expected rank-4 input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d: input channels {x.shape[1]} != kernel channels {w.shape[1]}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d: invalid stride={stride} padding={padding}")
    h, wd = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
    if w.shape[2] > h or w.shape[3] > wd:
        raise DimensionError(f"conv2d: kernel {w.shape[2:]} larger than padded input {(h, wd)}")
    p = padding
    xpad = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    out = kernels.conv2d_forward(xpad, w.data, stride)

    def _bw(g):
        dxpad, dw = kernels.conv2d_backward(xpad, w.data, g, stride)
        dx = dxpad[:, :, p:p + x.shape[2], p:p + x.shape[3]] if p else dxpad
        return np.ascontiguousarray(dx), dw

    return make_op("conv2d", out, (x, w), _bw)


def maxpool2d(x, window):
    """Non-overlapping max pool (stride == window, trailing rows/cols dropped)."""
    if x.ndim != 4:
        raise DimensionError(f"maxpool2d: expected rank-4 input, got {x.shape}")
    if window < 1 or window > x.shape[2] or window > x.shape[3]:
        raise DimensionError(f"maxpool2d: window {window} does not fit input {x.shape}")
    out, idx = kernels.maxpool2d_forward(x.data, window)
    shape = x.shape
    return make_op("maxpool2d", out, (x,),
                   lambda g: (kernels.maxpool2d_backward(np.ascontiguousarray(g), idx, shape, window),))


def flatten(x):
    shape = x.shape
    return make_op("flatten", x.data.reshape(shape[0], -1), (x,), lambda g: (g.reshape(shape),))


# -- softmax family ----------------------------------------------------------

def softmax_np(z):
    """Row softmax on a plain array (no tape)."""
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(z):
    """Row-wise log-softmax of [B, C] logits, stabilized by max subtraction."""
    if z.ndim != 2 or z.shape[1] < 2:
        raise DimensionError(f"log_softmax: expected [B, C>=2] logits, got {z.shape}")
    shifted = z.data - z.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    sm = np.exp(out)
    return make_op("log_softmax", out, (z,),
                   lambda g: (g - sm * g.sum(axis=1, keepdims=True),))


def _check_labels(y, b, c):
    y = np.asarray(y)
    if y.shape != (b,):
        raise DimensionError(f"labels shape {y.shape} does not match batch size {b}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValidationError(f"labels must be integers, got dtype {y.dtype}")
    if b and (y.min() < 0 or y.max() >= c):
        raise ValidationError(f"label out of range [0, {c}): min={y.min()} max={y.max()}")
    return y.astype(np.int64)


def cross_entropy(z, y):
    """Mean negative log-likelihood of integer labels ``y`` under logits ``z``."""
    if z.ndim != 2 or z.shape[1] < 2:
        raise DimensionError(f"cross_entropy: expected [B, C>=2] logits, got {z.shape}")
    b, c = z.shape
    y = _check_labels(y, b, c)
    shifted = z.data - z.data.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(b)
    loss = -logp[rows, y].mean()

    def _bw(g):
        d = np.exp(logp)
        d[rows, y] -= 1.0
        return (d * (g / b),)

    return make_op("cross_entropy", np.asarray(loss, dtype=z.dtype), (z,), _bw)


def normalize_rows(z, eps):
    """Per-row standardization ``(z - mean) / (std + eps)`` (population std)."""
    if z.ndim != 2:
        raise DimensionError(f"normalize_rows: expected [B, C], got {z.shape}")
    c = z.shape[1]
    d = z.data - z.data.mean(axis=1, keepdims=True)
    sigma = np.sqrt((d * d).mean(axis=1, keepdims=True))
    s = sigma + eps
    out = d / s

    def _bw(g):
        gd = g / s
        # d sigma / d d_k = d_k / (C sigma); zero where the row is constant
        dsig = np.divide(d, c * sigma, out=np.zeros_like(d), where=sigma > 0)
        gd = gd - dsig * ((g * d).sum(axis=1, keepdims=True) / (s * s))
        return (gd - gd.mean(axis=1, keepdims=True),)

    return make_op("normalize_rows", out, (z,), _bw)
