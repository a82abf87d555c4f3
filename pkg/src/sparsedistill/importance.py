"""Teacher-guided gradient importance with EMA smoothing and bias correction."""

import logging

import numpy as np

from .data import batch_indices
from .distillation import DistillConfig, TeacherCache, total_loss
from .errors import ContractError, NumericalError
from .tensor import Tensor, backward

log = logging.getLogger(__name__)


class ImportanceState:
    """Running EMA of ``|W * dL/dW|`` per prunable weight.

    ``batches`` counts accumulate calls and is shared by every layer, so the
    bias correction uses one global step count.

    Alongside the EMA ``scores`` the state keeps the undamped sum
    ``sum_i gamma**(t-i) * raw_i`` and its weight ``sum_i gamma**i``. Their
    ratio equals ``scores / (1 - gamma**t)`` algebraically but is exact at
    ``t = 1``, where dividing ``(1 - gamma) * x`` by ``(1 - gamma)`` is not.
    """

    def __init__(self, model, gamma=0.9):
        if not 0.0 <= gamma < 1.0:
            raise ContractError(f"gamma must lie in [0, 1), got {gamma}")
        self.gamma = gamma
        self.scores = {n: np.zeros(model.params[n].shape, dtype=np.float64) for n in model.prunable_names()}
        self._sums = {n: np.zeros_like(s) for n, s in self.scores.items()}
        self._weight = 0.0
        self.batches = 0
        self.finalized = False
        self.missing_grad = 0  # prunable weights seen without a gradient; nonzero means a wiring bug

    def accumulate(self, model):
        """Fold the gradients currently on ``model`` into the EMA."""
        if self.finalized:
            raise ContractError("cannot accumulate into a finalized ImportanceState")
        g = self.gamma
        for name, ema in self.scores.items():
            p = model.params[name]
            if p.grad is None:
                self.missing_grad += 1
                log.warning("no gradient for prunable parameter %s; skipped", name)
                continue
            raw = np.abs(p.data.astype(np.float64) * p.grad.astype(np.float64))
            ema *= g
            ema += (1.0 - g) * raw
            acc = self._sums[name]
            acc *= g
            acc += raw
        self._weight = g * self._weight + 1.0
        self.batches += 1
        return self

    def finalize(self):
        """Bias-correct (EMA / (1 - gamma**t)) and return float32 scores."""
        if self.finalized:
            raise ContractError("ImportanceState already finalized")
        if self.batches == 0:
            raise ContractError("no batches accumulated")
        for name in self.scores:
            self.scores[name] = self._sums[name] / self._weight
        self.finalized = True
        return {n: s.astype(np.float32) for n, s in self.scores.items()}


def accumulate_batch(state, model):
    return state.accumulate(model)


def finalize(state):
    return state.finalize()


def compute_importance(teacher, student, train, cfg=None, gamma=0.9, epochs=3, batch_size=32,
                       seed=0, cache=None):
    """Score every prunable student weight; the student is never updated.

    Per batch: forward, total loss against the teacher, backward, fold
    ``|W * grad|`` into the EMA, clear gradients.
    """
    cfg = cfg or DistillConfig()
    cache = cache or TeacherCache(teacher, train, student.dtype)
    state = ImportanceState(student, gamma)
    student.train()
    for epoch in range(epochs):
        for b, idx in enumerate(batch_indices(len(train), batch_size, seed, epoch)):
            student.zero_grad()
            try:
                z_s = student.forward(Tensor(train.inputs[idx], dtype=student.dtype))
                loss = total_loss(z_s, cache[idx], train.labels[idx], cfg)
            except NumericalError as exc:
                raise NumericalError(f"importance scoring: epoch {epoch} batch {b}: {exc}") from exc
            backward(loss)
            state.accumulate(student)
    student.zero_grad()
    return state.finalize()
