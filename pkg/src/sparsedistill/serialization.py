"""Binary file formats: checkpoints (SDCK), importance scores (SDIS) and
pruning masks (SDMK).

All integers are little-endian. Tensor records share one layout::

    u32 name_len | name (UTF-8) | u32 rank | rank x u32 extents | payload

where the payload is raw little-endian float32 (checkpoints, scores) or
row-major packed bits, MSB first, padded to a byte boundary (masks).

Checkpoints carry a trailer after the parameter records holding the model's
per-sample input shape and architecture name, which the layer records alone
cannot recover.
"""

import struct

import numpy as np

from .errors import FormatError
from .models import LAYER_KINDS, LayerSpec, Model
from .tensor import Tensor

CKPT_MAGIC = b"SDCK"
SCORES_MAGIC = b"SDIS"
MASK_MAGIC = b"SDMK"
VERSION = 1

_KIND_TAGS = {k: i + 1 for i, k in enumerate(LAYER_KINDS)}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


class _Writer:
    def __init__(self):
        self.parts = []

    def raw(self, b):
        self.parts.append(bytes(b))

    def u32(self, v):
        self.parts.append(struct.pack("<I", v))

    def u64(self, v):
        self.parts.append(struct.pack("<Q", v))

    def f64(self, v):
        self.parts.append(struct.pack("<d", v))

    def name(self, s):
        b = s.encode("utf-8")
        self.u32(len(b))
        self.raw(b)

    def shape(self, shape):
        self.u32(len(shape))
        for d in shape:
            self.u32(d)

    def getvalue(self):
        return b"".join(self.parts)


class _Reader:
    def __init__(self, buf, what):
        self.buf = buf
        self.pos = 0
        self.what = what

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated {self.what}: needed {n} bytes, only {len(self.buf) - self.pos} left", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def name(self):
        at = self.pos
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"invalid UTF-8 name in {self.what}", at) from None

    def shape(self):
        rank = self.u32()
        if rank > 8:
            raise FormatError(f"implausible tensor rank {rank} in {self.what}", self.pos - 4)
        return tuple(self.u32() for _ in range(rank))

    def header(self, magic):
        got = self.take(4)
        if got != magic:
            raise FormatError(f"bad magic {got!r} for {self.what}, expected {magic!r}", 0)
        version = self.u32()
        if version != VERSION:
            raise FormatError(f"unsupported {self.what} version {version}", 4)

    def end(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes in {self.what}", self.pos)


def _write_f32_record(w, name, arr):
    w.name(name)
    w.shape(arr.shape)
    w.raw(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_f32_record(r):
    name = r.name()
    shape = r.shape()
    n = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape)
    return name, data.astype(np.float32)


def _read_file(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write_file(path, data):
    with open(path, "wb") as fh:
        fh.write(data)


# -- checkpoints --------------------------------------------------------------

def checkpoint_bytes(model):
    w = _Writer()
    w.raw(CKPT_MAGIC)
    w.u32(VERSION)
    w.u32(len(model.layers))
    for spec in model.layers:
        w.u32(_KIND_TAGS[spec.kind])
        w.shape(spec.dims)
    w.u32(len(model.params))
    for name, p in model.params.items():
        _write_f32_record(w, name, p.data)
    w.shape(model.input_shape)
    w.name(model.arch)
    return w.getvalue()


def save_checkpoint(model, path):
    """Write ``model`` as SDCK. Parameters are stored as float32."""
    _write_file(path, checkpoint_bytes(model))


def parse_checkpoint(buf):
    r = _Reader(buf, "checkpoint")
    r.header(CKPT_MAGIC)
    layers = []
    for _ in range(r.u32()):
        at = r.pos
        tag = r.u32()
        if tag not in _TAG_KINDS:
            raise FormatError(f"unknown layer kind tag {tag}", at)
        layers.append(LayerSpec(_TAG_KINDS[tag], r.shape()))
    params = {}
    for _ in range(r.u32()):
        at = r.pos
        name, data = _read_f32_record(r)
        if name in params:
            raise FormatError(f"duplicate parameter {name!r}", at)
        params[name] = Tensor(data, requires_grad=True, dtype=np.float32)
    input_shape = r.shape()
    arch = r.name()
    r.end()
    return Model(layers, params, input_shape, arch)


def load_checkpoint(path):
    return parse_checkpoint(_read_file(path))


# -- importance scores ----------------------------------------------------------

def scores_bytes(scores, gamma, batches, epochs, distill):
    """``distill`` is any object with temperature/alpha/beta/epsilon attributes."""
    w = _Writer()
    w.raw(SCORES_MAGIC)
    w.u32(VERSION)
    w.f64(gamma)
    w.u64(batches)
    w.u32(epochs)
    for v in (distill.temperature, distill.alpha, distill.beta, distill.epsilon):
        w.f64(v)
    w.u32(len(scores))
    for name, arr in scores.items():
        _write_f32_record(w, name, arr)
    return w.getvalue()


def save_scores(path, scores, gamma, batches, epochs, distill):
    _write_file(path, scores_bytes(scores, gamma, batches, epochs, distill))


def parse_scores(buf):
    """Return ``(scores, meta)``; meta echoes gamma, batches, epochs and the distill settings."""
    r = _Reader(buf, "score file")
    r.header(SCORES_MAGIC)
    meta = {"gamma": r.f64(), "batches": r.u64(), "epochs": r.u32()}
    for key in ("temperature", "alpha", "beta", "epsilon"):
        meta[key] = r.f64()
    scores = {}
    for _ in range(r.u32()):
        name, data = _read_f32_record(r)
        scores[name] = data
    r.end()
    return scores, meta


def load_scores(path):
    return parse_scores(_read_file(path))


# -- masks ----------------------------------------------------------------------

def mask_bytes(mask):
    w = _Writer()
    w.raw(MASK_MAGIC)
    w.u32(VERSION)
    w.f64(mask.target_sparsity)
    w.u64(mask.retained)
    w.f64(mask.threshold)
    w.u32(len(mask.masks))
    for name, m in mask.masks.items():
        w.name(name)
        w.shape(m.shape)
        w.raw(np.packbits(np.ascontiguousarray(m, dtype=bool).reshape(-1)).tobytes())
    return w.getvalue()


def save_mask(mask, path):
    _write_file(path, mask_bytes(mask))


def parse_mask(buf):
    from .pruning import PruneMask

    r = _Reader(buf, "mask file")
    r.header(MASK_MAGIC)
    p = r.f64()
    k = r.u64()
    tau = r.f64()
    masks = {}
    for _ in range(r.u32()):
        name = r.name()
        shape = r.shape()
        n = int(np.prod(shape)) if shape else 1
        bits = np.frombuffer(r.take((n + 7) // 8), dtype=np.uint8)
        masks[name] = np.unpackbits(bits, count=n).astype(bool).reshape(shape)
    r.end()
    total = sum(int(m.sum()) for m in masks.values())
    if total != k:
        raise FormatError(f"mask retains {total} entries but header says k={k}", 4 + 4 + 8)
    return PruneMask(masks, p, k, tau)


def load_mask(path):
    return parse_mask(_read_file(path))
