"""Hot conv/pool kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``SPARSEDISTILL_DISABLE_NUMBA`` is unset (or ``0``). The backend can
also be switched at runtime with :func:`set_backend`, which the kernel
benchmark uses to time both paths in one process.

All kernels take an already zero-padded input; padding and cropping live in
the autodiff layer.
"""

import os

from . import _numpy

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

_BACKENDS = {"numpy": _numpy}
if _numba is not None:
    _BACKENDS["numba"] = _numba


def _default_backend():
    flag = os.environ.get("SPARSEDISTILL_DISABLE_NUMBA", "").strip().lower()
    if flag not in ("", "0", "false", "no") or _numba is None:
        return "numpy"
    return "numba"


_active = _default_backend()


def available_backends():
    return sorted(_BACKENDS)


def get_backend():
    return _active


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` for all subsequent kernel calls."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available_backends()}")
    _active = name


def conv2d_forward(xpad, w, stride):
    return _BACKENDS[_active].conv2d_forward(xpad, w, stride)


def conv2d_backward(xpad, w, g, stride):
    """Return ``(grad wrt padded input, grad wrt kernel)``."""
    return _BACKENDS[_active].conv2d_backward(xpad, w, g, stride)


def maxpool2d_forward(x, k):
    """Non-overlapping ``k x k`` max pool; returns ``(out, argmax-in-window)``."""
    return _BACKENDS[_active].maxpool2d_forward(x, k)


def maxpool2d_backward(g, idx, in_shape, k):
    return _BACKENDS[_active].maxpool2d_backward(g, idx, in_shape, k)
