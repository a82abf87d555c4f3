"""One-shot global unstructured pruning."""

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .errors import ConfigError, ContractError


@dataclass
class PruneMask:
    """Binary keep-masks for the prunable weights.

    ``masks`` maps parameter name to a bool array (True = retained).
    Parameters without an entry are implicitly fully retained.
    """

    masks: dict
    target_sparsity: float
    retained: int
    threshold: float

    @property
    def total(self):
        return sum(m.size for m in self.masks.values())

    @property
    def sparsity(self):
        return 1.0 - self.retained / self.total

    def per_layer_retained(self):
        return {n: int(m.sum()) for n, m in self.masks.items()}

    @classmethod
    def ones_like(cls, model):
        masks = {n: np.ones(model.params[n].shape, dtype=bool) for n in model.prunable_names()}
        total = sum(m.size for m in masks.values())
        return cls(masks, 0.0, total, -math.inf)


def retained_count(p, total):
    """``floor((1 - p) * total)``, reading ``p`` as the decimal it was written as.

    Going through the shortest repr keeps e.g. ``p=0.9, total=10`` at ``k=1``
    instead of the ``0`` that binary float rounding would give.
    """
    frac = Fraction(repr(float(p)))
    return math.floor((1 - frac) * total)


def _flatten(scores):
    if not scores:
        raise ContractError("no importance scores given")
    return np.concatenate([np.asarray(s, dtype=np.float64).reshape(-1) for s in scores.values()])


def global_threshold(scores, p):
    """Return ``(tau, k)``: ``k = floor((1-p)*D)`` and ``tau`` the k-th largest score."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"sparsity must be in [0, 1), got {p}")
    v = _flatten(scores)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ContractError("scores must be finite and nonnegative")
    k = retained_count(p, v.size)
    if k == 0:
        raise ConfigError(f"sparsity {p} retains no weights out of D={v.size}")
    tau = float(np.sort(v)[v.size - k])
    return tau, k


def build_mask(scores, tau, k, target_sparsity=float("nan")):
    """Keep scores > tau, then fill up to exactly ``k`` with scores == tau in
    ascending global flat-index order."""
    v = _flatten(scores)
    keep = v > tau
    need = k - int(keep.sum())
    ties = np.flatnonzero(v == tau)
    if need < 0 or need > ties.size:
        raise ContractError(f"threshold {tau} cannot yield exactly k={k} retained entries")
    keep[ties[:need]] = True
    masks = {}
    off = 0
    for name, s in scores.items():
        n = np.size(s)
        masks[name] = keep[off:off + n].reshape(np.shape(s))
        off += n
    return PruneMask(masks, target_sparsity, k, float(tau))


def global_mask(scores, p):
    tau, k = global_threshold(scores, p)
    return build_mask(scores, tau, k, target_sparsity=p)


def apply_mask(model, mask):
    """W <- W * M in place for every masked weight; pruned entries become +0.0."""
    for name, m in mask.masks.items():
        if name not in model.params or model.params[name].shape != m.shape:
            raise ContractError(f"mask entry {name} does not match the model")
    for name, m in mask.masks.items():
        w = model.params[name].data
        w[...] = np.where(m, w, np.zeros((), dtype=w.dtype))
    return model


def count_zeros(model):
    return sum(int(np.count_nonzero(model.params[n].data == 0)) for n in model.prunable_names())


def measure_sparsity(model):
    """Fraction of prunable weight entries that are exactly zero."""
    return count_zeros(model) / model.num_prunable()
