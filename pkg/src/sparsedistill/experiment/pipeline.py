"""The individual pipeline phases, shared by the CLI subcommands and ``compare``."""

import logging
import os
import time
from contextlib import contextmanager

import numpy as np

from ..data import Splits, load_csv, load_idx, make_synthetic, split_train_val
from ..distillation import TeacherCache, kd_finetune
from ..errors import MissingArtifactError
from ..importance import compute_importance
from ..models import ModelConfig, build_model
from ..sparse_retrain import ce_loss_fn
from ..tensor import default_dtype
from ..training import append_metrics, fit

log = logging.getLogger(__name__)


class PhaseClock:
    """Accumulates wall-clock seconds per named phase."""

    def __init__(self):
        self.seconds = {}

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - t0

    @property
    def total(self):
        return sum(self.seconds.values())


def require_file(path, what):
    if not os.path.isfile(path):
        raise MissingArtifactError(f"missing {what}: {path} (run the step that produces it first)")
    return path


def load_splits(spec):
    """Materialize train/val/test splits described by a :class:`DatasetSpec`."""
    if spec.kind == "synthetic":
        return make_synthetic(spec.classes, spec.per_class, spec.input_shape, spec.separation,
                              spec.seed, noise=spec.noise, similarity=spec.similarity)
    if spec.kind == "idx":
        for p in (spec.train_images, spec.train_labels, spec.test_images, spec.test_labels):
            require_file(p, "IDX file")
        full = load_idx(spec.train_images, spec.train_labels, spec.classes)
        test = load_idx(spec.test_images, spec.test_labels, spec.classes, split="test")
    else:
        for p in (spec.train_csv, spec.test_csv):
            require_file(p, "CSV file")
        scale = spec.csv_scale or None
        full = load_csv(spec.train_csv, spec.input_shape, spec.classes, spec.csv_header, scale)
        test = load_csv(spec.test_csv, spec.input_shape, spec.classes, spec.csv_header, scale, split="test")
    train, val = split_train_val(full, spec.val_fraction, spec.seed)
    return Splits(train, val, test)


def model_config(arch, splits):
    return ModelConfig(arch, splits.train.sample_shape, splits.train.num_classes)


def train_teacher(cfg, splits, seed, metrics_path=None, run_id="teacher"):
    teacher, _ = build_model(model_config(cfg.teacher_arch, splits), seed)
    res = fit(teacher, splits.train, splits.val, ce_loss_fn, cfg.optim, seed, phase="teacher", run_id=run_id)
    if metrics_path:
        append_metrics(metrics_path, res.history)
    return teacher, res


def distill_student(cfg, teacher, splits, seed, cache=None, metrics_path=None, run_id="student"):
    """Fresh student (init seed ``seed``) fine-tuned against the frozen teacher."""
    student, snapshot = build_model(model_config(cfg.student_arch, splits), seed)
    cache = cache or TeacherCache(teacher, splits.train, default_dtype())
    res = kd_finetune(student, teacher, splits.train, splits.val, cfg.finetune, cfg.optim, seed=seed,
                      run_id=run_id, cache=cache)
    if metrics_path:
        append_metrics(metrics_path, res.history)
    return student, snapshot, res


def score_student(cfg, teacher, student, splits, seed, cache=None):
    cache = cache or TeacherCache(teacher, splits.train, default_dtype())
    scores = compute_importance(teacher, student, splits.train, cfg.score, gamma=cfg.gamma,
                                epochs=cfg.score_epochs, batch_size=cfg.optim.batch_size, seed=seed,
                                cache=cache)
    batches = cfg.score_epochs * -(-len(splits.train) // cfg.optim.batch_size)
    return scores, batches


def sparsity_of(model):
    """(zeros, D) over the prunable weights."""
    d = model.num_prunable()
    zeros = sum(int(np.count_nonzero(model.params[n].data == 0)) for n in model.prunable_names())
    return zeros, d


def teacher_seed(seed):
    """Teachers are initialized from a seed stream disjoint from the students'."""
    return 1000 + int(seed)
