"""Momentum SGD with mask-aware updates, early stopping and the shared
epoch loop used by every training phase."""

import csv
import logging
import math
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import functional as F
from .data import batch_indices, require_nonempty
from .errors import ContractError, NumericalError
from .tensor import Tensor, backward, no_grad

log = logging.getLogger(__name__)


@dataclass
class OptimConfig:
    lr: float = 0.01
    lr_min: float = 0.001
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5


def cosine_lr(cfg, epoch, epochs):
    """Cosine decay from ``cfg.lr`` at epoch 0 to ``cfg.lr_min`` at the last epoch."""
    if epochs <= 1:
        return cfg.lr
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + math.cos(math.pi * epoch / (epochs - 1)))


class SgdMomentumState:
    """Velocity buffers for momentum SGD, optionally tied to a pruning mask."""

    def __init__(self, model, lr=0.01, momentum=0.9, mask=None):
        if not 0.0 <= momentum < 1.0 or lr <= 0:
            raise ContractError(f"need lr > 0 and momentum in [0, 1), got lr={lr} momentum={momentum}")
        self.lr = lr
        self.momentum = momentum
        self.mask = mask
        self.velocity = {n: np.zeros_like(p.data) for n, p in model.params.items()}
        if mask is not None:
            for n, m in mask.masks.items():
                if n not in self.velocity or self.velocity[n].shape != m.shape:
                    raise ContractError(f"mask entry {n} does not match the model")


def masked_step(opt, model):
    """One update: g_m = g*M; v <- mu*(v*M) + g_m; W <- W - lr*v.

    Parameters without a mask entry use M = 1. Masking uses ``np.where`` so
    non-finite gradients at pruned positions cannot leak in as NaN.
    """
    masks = opt.mask.masks if opt.mask is not None else {}
    mu, lr = opt.momentum, opt.lr
    for name, p in model.params.items():
        g = p.grad
        if g is None:
            continue
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        v = opt.velocity[name]
        m = masks.get(name)
        if m is None:
            v = mu * v + g
        else:
            zero = np.zeros((), dtype=v.dtype)
            v = mu * np.where(m, v, zero) + np.where(m, g, zero)
        opt.velocity[name] = v.astype(p.dtype, copy=False)
        p.data -= (lr * opt.velocity[name]).astype(p.dtype, copy=False)
    return model


class EarlyStopState:
    """Tracks the best validation epoch (accuracy, then lower loss) and its weights."""

    def __init__(self, patience=5):
        self.patience = patience
        self.best_acc = -math.inf
        self.best_loss = math.inf
        self.best_epoch = -1
        self.best_state = None
        self.since = 0

    def update(self, epoch, val_acc, val_loss, model):
        """Record one epoch; returns True when training should stop."""
        if val_acc > self.best_acc or (val_acc == self.best_acc and val_loss < self.best_loss):
            self.best_acc, self.best_loss, self.best_epoch = val_acc, val_loss, epoch
            self.best_state = model.state_dict()
            self.since = 0
        else:
            self.since += 1
        return self.since >= self.patience

    def restore(self, model):
        if self.best_state is not None:
            model.load_state_dict(self.best_state)
        return model


@dataclass
class EpochMetrics:
    run_id: str
    phase: str
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    sparsity: float
    wall_clock_s: float


METRICS_FIELDS = [f for f in EpochMetrics.__dataclass_fields__]


def append_metrics(path, rows):
    """Append rows to a metrics CSV, writing the header when the file is new."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        if new:
            w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


def predict_logits(model, inputs, batch_size=256):
    with no_grad():
        outs = [model.forward(Tensor(inputs[i:i + batch_size], dtype=model.dtype)).data
                for i in range(0, inputs.shape[0], batch_size)]
    return np.concatenate(outs, axis=0)


def evaluate(model, dataset, batch_size=256):
    """Top-1 accuracy in [0, 1]."""
    require_nonempty(dataset)
    logits = predict_logits(model, dataset.inputs, batch_size)
    return float(np.mean(np.argmax(logits, axis=1) == dataset.labels))


def evaluate_full(model, dataset, batch_size=256):
    """``(accuracy, mean cross-entropy)``."""
    require_nonempty(dataset)
    logits = predict_logits(model, dataset.inputs, batch_size)
    with no_grad():
        loss = F.cross_entropy(Tensor(logits, dtype=logits.dtype), dataset.labels).item()
    return float(np.mean(np.argmax(logits, axis=1) == dataset.labels)), loss


@dataclass
class FitResult:
    history: list
    best_epoch: int
    epochs_run: int
    seconds: float


def fit(model, train, val, loss_fn, cfg, seed, *, mask=None, phase="train", run_id="run",
        epochs=None, early_stopping=True, sparsity_fn=None):
    """Shared epoch loop.

    ``loss_fn(model, inputs, labels, indices)`` returns a scalar Tensor;
    ``indices`` index into ``train`` (used for cached teacher logits).
    Validation accuracy drives early stopping; the best epoch's weights are
    restored before returning. With ``early_stopping=False`` all epochs run
    and the final weights are kept.
    """
    epochs = cfg.max_epochs if epochs is None else epochs
    start = time.perf_counter()
    history = []
    if epochs <= 0:
        return FitResult(history, -1, 0, 0.0)
    require_nonempty(train)
    opt = SgdMomentumState(model, cfg.lr, cfg.momentum, mask)
    stopper = EarlyStopState(cfg.patience)
    model.train()
    run = 0
    for epoch in range(epochs):
        opt.lr = cosine_lr(cfg, epoch, epochs)
        total, count = 0.0, 0
        for b, idx in enumerate(batch_indices(len(train), cfg.batch_size, seed, epoch)):
            model.zero_grad()
            try:
                loss = loss_fn(model, train.inputs[idx], train.labels[idx], idx)
            except NumericalError as exc:
                raise NumericalError(f"{phase}: epoch {epoch} batch {b}: {exc}") from exc
            if not math.isfinite(loss.item()):
                raise NumericalError(f"{phase}: non-finite loss at epoch {epoch} batch {b}")
            backward(loss)
            masked_step(opt, model)
            total += loss.item() * len(idx)
            count += len(idx)
        model.zero_grad()
        run = epoch + 1
        val_acc, val_loss = evaluate_full(model, val)
        sp = sparsity_fn(model) if sparsity_fn else 0.0
        history.append(EpochMetrics(run_id, phase, epoch, total / count, val_loss, val_acc, sp,
                                    time.perf_counter() - start))
        log.debug("%s epoch %d: loss %.4f val_acc %.4f", phase, epoch, total / count, val_acc)
        if early_stopping and stopper.update(epoch, val_acc, val_loss, model):
            break
    if early_stopping:
        stopper.restore(model)
    model.eval()
    return FitResult(history, stopper.best_epoch if early_stopping else run - 1, run,
                     time.perf_counter() - start)
