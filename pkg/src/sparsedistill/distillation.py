"""Context-aware KL distillation on normalized, temperature-scaled logits."""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .errors import ConfigError, DimensionError
from .tensor import Tensor, no_grad
from .training import OptimConfig, fit, predict_logits

LOG_FLOOR = math.log(1e-12)


@dataclass(frozen=True)
class DistillConfig:
    temperature: float = 5.0
    alpha: float = 0.7
    beta: float = 0.5
    epsilon: float = 1e-6

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.temperature <= 1:
            warnings.warn(f"temperature {self.temperature} <= 1 sharpens rather than softens", stacklevel=3)
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")


def _as_tensor(z):
    return z if isinstance(z, Tensor) else Tensor(z, dtype=np.asarray(z).dtype)


def normalize_logits(z, eps=1e-6):
    """Per-row ``(z - mean) / (population std + eps)``."""
    z = _as_tensor(z)
    if z.ndim != 2 or z.shape[1] < 2:
        raise DimensionError(f"normalize_logits: expected [B, C>=2], got {z.shape}")
    return F.normalize_rows(z, eps)


def temperature_scale(z, temperature):
    if not temperature > 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    return F.mul(_as_tensor(z), 1.0 / temperature)


def _soft_log_probs(z, cfg):
    return F.log_softmax(temperature_scale(normalize_logits(z, cfg.epsilon), cfg.temperature))


def ca_kld(z_s, z_t, cfg):
    """``T^2 * [beta * KL(P_S||P_T) + (1-beta) * KL(P_T||P_S)]``, batch-mean.

    Teacher logits are constants; only ``z_s`` carries gradient. Log
    arguments are floored at 1e-12.
    """
    z_s = _as_tensor(z_s)
    zt = z_t.data if isinstance(z_t, Tensor) else np.asarray(z_t)
    if z_s.shape != zt.shape:
        raise DimensionError(f"ca_kld: student logits {z_s.shape} vs teacher {zt.shape}")
    # teacher goes through the identical op sequence so equal inputs give equal bits
    with no_grad():
        log_pt_raw = _soft_log_probs(Tensor(zt, dtype=z_s.dtype), cfg).data
    p_t = np.exp(log_pt_raw)
    log_pt = np.maximum(log_pt_raw, LOG_FLOOR)

    log_ps_raw = _soft_log_probs(z_s, cfg)
    p_s = F.exp(log_ps_raw)
    log_ps = F.clamp_min(log_ps_raw, LOG_FLOOR)

    diff = F.sub(log_ps, log_pt)                 # log P_S - log P_T
    reverse = F.sum(F.mul(p_s, diff))            # KL(P_S || P_T)
    forward = F.neg(F.sum(F.mul(diff, p_t)))     # KL(P_T || P_S)
    b = cfg.beta
    mixed = F.add(F.mul(reverse, b), F.mul(forward, 1.0 - b))
    # both divergences are >= 0 exactly; for nearly equal distributions the
    # cancelling sums can round to ~-1e-16, which the clamp removes
    mixed = F.clamp_min(mixed, 0.0)
    return F.mul(mixed, cfg.temperature ** 2 / z_s.shape[0])


def total_loss(z_s, z_t, y, cfg):
    """``alpha * ca_kld + (1 - alpha) * CE(raw student logits, y)``."""
    z_s = _as_tensor(z_s)
    if cfg.alpha == 0.0:
        return F.cross_entropy(z_s, y)
    if cfg.alpha == 1.0:
        return ca_kld(z_s, z_t, cfg)
    kd = ca_kld(z_s, z_t, cfg)
    ce = F.cross_entropy(z_s, y)
    return F.add(F.mul(kd, cfg.alpha), F.mul(ce, 1.0 - cfg.alpha))


class TeacherCache:
    """Teacher logits for every sample of a fixed dataset, computed once.

    Valid because the teacher is frozen, has no stochastic layers and the
    data pipeline applies no augmentation.
    """

    def __init__(self, teacher, dataset, dtype=None):
        teacher.eval()
        logits = predict_logits(teacher, dataset.inputs)
        self.logits = logits.astype(dtype, copy=False) if dtype is not None else logits

    def __getitem__(self, idx):
        return self.logits[idx]


def kd_loss_fn(cache, cfg):
    def loss_fn(model, x, y, idx):
        z_s = model.forward(Tensor(x, dtype=model.dtype))
        return total_loss(z_s, cache[idx], y, cfg)
    return loss_fn


def kd_finetune(student, teacher, train, val, cfg, optim=None, epochs=None, seed=0,
                run_id="run", phase="distill", cache=None):
    """Train ``student`` on the total loss against a frozen ``teacher``.

    Returns the :class:`~sparsedistill.training.FitResult`; the student is
    updated in place (best validation epoch restored).
    """
    optim = optim or OptimConfig()
    cache = cache or TeacherCache(teacher, train, student.dtype)
    return fit(student, train, val, kd_loss_fn(cache, cfg), optim, seed, phase=phase,
               run_id=run_id, epochs=epochs)
