"""Central finite-difference gradients, used as the test-time ground truth."""

import numpy as np

from .tensor import Tensor, no_grad


def finite_difference_grad(f, x, step=1e-5):
    """Estimate d f(x) / d x elementwise by central differences.

    ``f`` maps a Tensor to a scalar (Tensor or float). ``x`` should be
    float64 for the estimate to be meaningful; it is perturbed on a private
    copy, so the caller's tensor is left untouched.
    """
    base = np.array(x.data, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)

    def _eval(arr):
        with no_grad():
            val = f(Tensor(arr, dtype=np.float64))
        return float(val.data) if isinstance(val, Tensor) else float(val)

    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = _eval(base)
        flat[i] = orig - step
        fm = _eval(base)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest ``|a - n| / max(|a|, |n|)`` over entries whose absolute gap exceeds ``floor``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    gap = np.abs(a - n)
    denom = np.maximum(np.abs(a), np.abs(n))
    rel = np.where(gap > floor, gap / np.maximum(denom, np.finfo(np.float64).tiny), 0.0)
    return float(rel.max(initial=0.0))
