"""Retraining a pruned student under a frozen mask, with or without the teacher."""

import numpy as np

from . import functional as F
from .distillation import TeacherCache, kd_loss_fn
from .errors import ContractError
from .pruning import measure_sparsity
from .tensor import Tensor
from .training import (  # noqa: F401 - re-exported as part of this module's surface
    EarlyStopState,
    OptimConfig,
    SgdMomentumState,
    evaluate,
    fit,
    masked_step,
)


def _check_masked(model, mask):
    for name, m in mask.masks.items():
        w = model.params[name].data
        if w.shape != m.shape:
            raise ContractError(f"mask entry {name} does not match the model")
        if np.any(w[~m] != 0):
            raise ContractError(f"parameter {name} has nonzero weights at pruned positions; apply the mask first")


def ce_loss_fn(model, x, y, idx):
    return F.cross_entropy(model.forward(Tensor(x, dtype=model.dtype)), y)


def retrain_plain(model, mask, train, val, optim=None, seed=0, max_epochs=None, run_id="run",
                  phase="retrain-plain", early_stopping=True):
    """Cross-entropy fine-tuning with masked gradients and momentum."""
    optim = optim or OptimConfig()
    _check_masked(model, mask)
    return fit(model, train, val, ce_loss_fn, optim, seed, mask=mask, phase=phase, run_id=run_id,
               epochs=max_epochs, early_stopping=early_stopping, sparsity_fn=measure_sparsity)


def retrain_kd(model, teacher, mask, train, val, cfg, optim=None, seed=0, max_epochs=None,
               run_id="run", phase="retrain-kd", cache=None):
    """Total-loss (CA-KLD + CE) fine-tuning against the frozen teacher under ``mask``."""
    optim = optim or OptimConfig()
    _check_masked(model, mask)
    cache = cache or TeacherCache(teacher, train, model.dtype)
    return fit(model, train, val, kd_loss_fn(cache, cfg), optim, seed, mask=mask, phase=phase,
               run_id=run_id, epochs=max_epochs, sparsity_fn=measure_sparsity)
