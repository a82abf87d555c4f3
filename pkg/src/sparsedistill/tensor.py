"""Dense tensors with a define-by-run reverse-mode tape.

Every differentiable op that touches a tensor with ``requires_grad`` appends a
node to the calling thread's current :class:`Tape`. :func:`backward` replays
that tape in exact reverse recording order, accumulates gradients into leaf
``grad`` buffers, and then clears the tape so the next forward pass starts
fresh.
"""

import threading
from contextlib import contextmanager

import numpy as np

from .errors import ContractError, DimensionError, NumericalError

_state = threading.local()

_DTYPES = {32: np.float32, 64: np.float64}


def default_dtype():
    return getattr(_state, "dtype", np.float32)


def set_precision(bits):
    """Set the calling thread's default float width (32 or 64)."""
    if bits not in _DTYPES:
        raise ValueError(f"precision must be 32 or 64, got {bits!r}")
    _state.dtype = _DTYPES[bits]


@contextmanager
def precision(bits):
    prev = default_dtype()
    set_precision(bits)
    try:
        yield
    finally:
        _state.dtype = prev


def grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Run ops without recording them (inference, teacher forward passes)."""
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Node:
    __slots__ = ("op", "out", "parents", "backward")

    def __init__(self, op, out, parents, backward):
        self.op = op
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of differentiable ops for one forward pass.

    Usable as a context manager to isolate a region from the thread's
    default tape.
    """

    def __init__(self):
        self.nodes = []
        self.replayed = []  # op names from the most recent backward, in visit order
        self._prev = None

    def __len__(self):
        return len(self.nodes)

    def record(self, node):
        self.nodes.append(node)

    def clear(self):
        self.nodes = []

    def __enter__(self):
        self._prev = getattr(_state, "tape", None)
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev
        self._prev = None


def current_tape():
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = _state.tape = Tape()
    return tape


def _check_finite(arr, op):
    if not np.isfinite(arr).all():
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NumericalError(f"{op} produced {bad} non-finite value(s)")


class Tensor:
    """n-dimensional array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "_node", "_tape")
    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.array(data, dtype=dtype if dtype is not None else default_dtype())
        _check_finite(arr, "Tensor()")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None
        self._tape = None

    @classmethod
    def _wrap(cls, arr, requires_grad=False):
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t._node = None
        t._tape = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._node is None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor._wrap(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return self.data.shape[0]

    # arithmetic delegates to functional; imported lazily to avoid a cycle
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.add(F.neg(self), other)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return F.mul(self, 1.0 / other) if np.isscalar(other) else F.mul(self, 1.0 / np.asarray(other))

    def __neg__(self):
        from . import functional as F
        return F.neg(self)

    def __matmul__(self, other):
        from . import functional as F
        return F.matmul(self, other)


def make_op(op, data, parents, backward_fn):
    """Wrap an op result and record it on the tape when gradients are needed.

    ``backward_fn(g)`` returns one gradient (or None) per parent.
    """
    _check_finite(data, op)
    needs = grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor._wrap(data, requires_grad=needs)
    if needs:
        tape = current_tape()
        out._node = Node(op, out, parents, backward_fn)
        out._tape = tape
        tape.record(out._node)
    return out


def backward(loss):
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    Gradients add into existing leaf buffers, so repeated forward/backward
    pairs accumulate until :func:`zero_grads` (or ``Tensor.zero_grad``).
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.data.size != 1 or loss.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if loss._node is None or tape is None or not tape.nodes:
        raise ContractError("backward called with an empty tape (loss does not depend on any parameter)")

    grads = {id(loss): np.ones_like(loss.data)}
    tape.replayed = []
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        tape.replayed.append(node.op)
        pgrads = node.backward(g)
        for parent, pg in zip(node.parents, pgrads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise DimensionError(f"{node.op} backward produced grad {pg.shape} for input {parent.shape}")
            if parent._node is None:
                pg = pg.astype(parent.data.dtype, copy=False)
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
    tape.clear()


def zero_grads(tensors):
    for t in tensors:
        t.grad = None
