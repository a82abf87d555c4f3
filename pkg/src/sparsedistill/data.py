"""Datasets: seeded synthetic Gaussian clusters, IDX and CSV loaders, and
deterministic batching."""

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ContractError, FormatError, ValidationError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray  # [N, C, H, W] or [N, F], float32
    labels: np.ndarray  # [N] int64
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValidationError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValidationError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def sample_shape(self):
        return tuple(self.inputs.shape[1:])

    def subset(self, idx, split=None):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes, split or self.split)

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.inputs).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


class Splits(NamedTuple):
    train: Dataset
    val: Dataset
    test: Dataset


def _class_templates(rng, classes, shape):
    """Unit-RMS random templates; image shapes get blocky (4x upsampled) fields."""
    if len(shape) == 3:
        c, h, w = shape
        lo = rng.standard_normal((classes, c, -(-h // 4), -(-w // 4)))
        t = lo.repeat(4, axis=2).repeat(4, axis=3)[:, :, :h, :w]
    else:
        t = rng.standard_normal((classes,) + tuple(shape))
    flat = t.reshape(classes, -1)
    flat = flat / np.sqrt((flat ** 2).mean(axis=1, keepdims=True))
    return flat.reshape((classes,) + tuple(shape))


def make_synthetic(classes, per_class, input_shape, separation, seed, noise=1.0, similarity=0.0):
    """Gaussian clusters: class ``c`` samples are
    ``(separation * template_c + noise * N(0, I)) / sqrt(separation**2 + noise**2)``.

    Templates have unit RMS per element, so the final division gives inputs
    unit variance per element whatever the separation/noise ratio. With
    ``similarity`` rho > 0, classes ``2j`` and ``2j + 1`` share a component:
    ``template = sqrt(1 - rho) * own + sqrt(rho) * shared_j`` (renormalized),
    so sibling classes are more confusable than the rest. Each class is
    split 80/10/10 into train/val/test (val and test get
    ``floor(0.1 * per_class)`` each).
    """
    input_shape = tuple(int(d) for d in input_shape)
    if classes < 2 or per_class < 1 or separation <= 0 or noise <= 0:
        raise ConfigError("need classes >= 2, per_class >= 1, separation > 0, noise > 0")
    if not 0.0 <= similarity < 1.0:
        raise ConfigError(f"similarity must lie in [0, 1), got {similarity}")
    if len(input_shape) not in (1, 3) or min(input_shape) < 1:
        raise ConfigError(f"input shape must be (F,) or (C, H, W) with positive extents, got {input_shape}")
    rng = np.random.default_rng(seed)
    templates = _class_templates(rng, classes, input_shape)
    if similarity > 0:
        shared = _class_templates(rng, -(-classes // 2), input_shape)
        mixed = np.sqrt(1.0 - similarity) * templates + np.sqrt(similarity) * shared[np.arange(classes) // 2]
        flat = mixed.reshape(classes, -1)
        templates = (flat / np.sqrt((flat ** 2).mean(axis=1, keepdims=True))).reshape(mixed.shape)
    x = np.empty((classes, per_class) + input_shape, dtype=np.float64)
    for c in range(classes):
        x[c] = separation * templates[c] + noise * rng.standard_normal((per_class,) + input_shape)
    x /= np.sqrt(separation ** 2 + noise ** 2)
    y = np.repeat(np.arange(classes), per_class).reshape(classes, per_class)

    n_hold = per_class // 10
    parts = {"train": slice(2 * n_hold, None), "val": slice(0, n_hold), "test": slice(n_hold, 2 * n_hold)}
    out = {}
    for split, sl in parts.items():
        xs = x[:, sl].reshape((-1,) + input_shape)
        ys = y[:, sl].reshape(-1)
        order = rng.permutation(ys.size)
        out[split] = Dataset(xs[order].astype(np.float32), ys[order], classes, split)
    return Splits(out["train"], out["val"], out["test"])


def split_train_val(dataset, val_fraction=0.1, seed=0):
    """Seeded holdout split of a training set."""
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(val_fraction * n))
    return dataset.subset(np.sort(perm[n_val:]), "train"), dataset.subset(np.sort(perm[:n_val]), "val")


def batch_indices(n, batch_size, seed, epoch, drop_last=False):
    """Index slices for one epoch; the permutation depends only on (seed, epoch)."""
    if batch_size < 1:
        raise ConfigError("batch size must be >= 1")
    perm = np.random.default_rng([int(seed), int(epoch)]).permutation(n)
    stop = n - n % batch_size if drop_last else n
    return [perm[i:i + batch_size] for i in range(0, stop, batch_size)]


def batches(dataset, batch_size, seed, epoch, drop_last=False):
    for idx in batch_indices(len(dataset), batch_size, seed, epoch, drop_last):
        yield dataset.inputs[idx], dataset.labels[idx]


# -- IDX ------------------------------------------------------------------------

def _read_idx(path, magic, what):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4:
        raise FormatError(f"{what} file too short for a header: {len(buf)} bytes", 0)
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        raise FormatError(f"{what} magic 0x{got:08x}, expected 0x{magic:08x}", 0)
    ndim = magic & 0xFF
    hdr = 4 + 4 * ndim
    if len(buf) < hdr:
        raise FormatError(f"{what} header truncated: expected {hdr} bytes, got {len(buf)}", len(buf))
    dims = struct.unpack(f">{ndim}I", buf[4:hdr])
    need = int(np.prod(dims))
    have = len(buf) - hdr
    if have != need:
        raise FormatError(f"{what} payload length mismatch: expected {need} bytes, got {have}", hdr)
    return np.frombuffer(buf, dtype=np.uint8, offset=hdr).reshape(dims)


def load_idx(images_path, labels_path, num_classes=None, split="train"):
    """Load IDX (MNIST-format) images and labels; pixels are scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, "IDX images")
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, "IDX labels").astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels", 4)
    c = num_classes if num_classes is not None else int(labels.max()) + 1 if labels.size else 2
    if labels.size and labels.max() >= c:
        bad = int(np.argmax(labels >= c))
        raise FormatError(f"label {labels[bad]} out of range [0, {c})", 8 + bad)
    x = (images.astype(np.float32) / 255.0)[:, None, :, :]
    return Dataset(x, labels, max(c, 2), split)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images [N, H, W] and labels [N] in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">I", IDX_IMAGES_MAGIC) + struct.pack(">3I", *images.shape) + images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">I", IDX_LABELS_MAGIC) + struct.pack(">I", labels.shape[0]) + labels.tobytes())


# -- CSV ------------------------------------------------------------------------

def load_csv(path, shape, num_classes, header=False, scale=None, split="train"):
    """Rows of ``label,v0,...,vK``; values reshaped to ``shape`` per sample.

    ``scale`` divides the raw values (e.g. 255 for byte pixels).
    """
    shape = tuple(int(d) for d in shape)
    width = int(np.prod(shape))
    xs, ys = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row_no, row in enumerate(reader, start=1):
            if header and row_no == 1:
                continue
            if not row:
                continue
            if len(row) != width + 1:
                raise FormatError(f"row has {len(row) - 1} values, expected {width}", row_no)
            try:
                label = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise FormatError(f"unparseable value: {exc}", row_no) from None
            if not 0 <= label < num_classes:
                raise FormatError(f"label {label} out of range [0, {num_classes})", row_no)
            ys.append(label)
            xs.append(vals)
    x = np.asarray(xs, dtype=np.float64).reshape((-1,) + shape)
    if scale:
        x = x / scale
    return Dataset(x.astype(np.float32), np.asarray(ys, dtype=np.int64), num_classes, split)


def write_csv(path, dataset, header=False):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        width = int(np.prod(dataset.sample_shape))
        if header:
            w.writerow(["label"] + [f"v{i}" for i in range(width)])
        flat = dataset.inputs.reshape(len(dataset), -1)
        for label, row in zip(dataset.labels, flat):
            w.writerow([int(label)] + [repr(float(v)) for v in row])


def write_manifest(path, splits, **provenance):
    """JSON record of split sizes, digests and the seeds that produced them."""
    record = {"provenance": provenance, "splits": {}}
    for ds in splits:
        record["splits"][ds.split] = {
            "size": len(ds), "num_classes": ds.num_classes,
            "sample_shape": list(ds.sample_shape), "sha256": ds.digest(),
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
    return record


def require_nonempty(dataset):
    if len(dataset) == 0:
        raise ContractError("dataset is empty")
