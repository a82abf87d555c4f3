"""Method comparison: ours (with / without KD retraining) against one-shot LTH,
plain magnitude pruning and, optionally, an iterative magnitude schedule."""

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..distillation import TeacherCache
from ..models import build_model, lth_reset, magnitude_scores
from ..pruning import apply_mask, global_mask, retained_count
from ..serialization import save_checkpoint, save_mask, save_scores
from ..sparse_retrain import ce_loss_fn, retrain_kd, retrain_plain
from ..tensor import default_dtype
from ..training import append_metrics, evaluate, fit
from .pipeline import (
    PhaseClock,
    distill_student,
    load_splits,
    model_config,
    score_student,
    sparsity_of,
    teacher_seed,
    train_teacher,
)

log = logging.getLogger(__name__)

RECORD_FIELDS = ["run_id", "seed", "method", "target_sparsity", "retained", "total", "sparsity",
                 "accuracy", "retrain_epochs", "total_s", "phase_seconds"]


@dataclass
class RunRecord:
    run_id: str
    seed: int
    method: str
    target_sparsity: float
    retained: int
    total: int
    sparsity: float
    accuracy: float
    retrain_epochs: int
    total_s: float
    phase_seconds: dict = field(default_factory=dict)

    def row(self):
        d = asdict(self)
        d["phase_seconds"] = json.dumps(self.phase_seconds, sort_keys=True)
        return d


@dataclass
class SeedContext:
    """Artifacts shared by every (p, method) cell of one seed."""

    seed: int
    splits: object
    teacher: object
    student: object
    cache: object
    scores: dict
    score_seconds: float
    teacher_acc: float
    student_acc: float
    teacher_epochs: int
    student_epochs: int


def _temperature(method):
    return {"ours-kd-T3": 3.0, "ours-kd-T5": 5.0}[method]


def _iterative_schedule(p, cycles):
    """Geometric sparsity steps 1 - (1-p)**(c/n); the last step is exactly ``p``."""
    return [1.0 - (1.0 - p) ** (c / cycles) for c in range(1, cycles)] + [p]


class Comparison:
    def __init__(self, cfg, out_dir=None, progress=None):
        self.cfg = cfg
        self.out = out_dir or os.path.join(cfg.out, "compare")
        self.progress = progress or (lambda msg: log.info(msg))
        os.makedirs(self.out, exist_ok=True)
        self.metrics_path = os.path.join(self.out, "metrics.csv")
        self.records = []
        self.seed_info = []

    # -- per-seed preparation -----------------------------------------------

    def prepare_seed(self, seed, splits):
        cfg = self.cfg
        t0 = time.perf_counter()
        sdir = os.path.join(self.out, f"seed{seed}")
        os.makedirs(sdir, exist_ok=True)
        teacher, tres = train_teacher(cfg, splits, teacher_seed(seed), self.metrics_path, run_id=f"s{seed}-teacher")
        save_checkpoint(teacher, os.path.join(sdir, "teacher.sdck"))
        clock = PhaseClock()
        with clock.phase("score"):
            cache = TeacherCache(teacher, splits.train, default_dtype())
        student, _, sres = distill_student(cfg, teacher, splits, seed, cache, self.metrics_path,
                                           run_id=f"s{seed}-student")
        save_checkpoint(student, os.path.join(sdir, "student.sdck"))
        before = student.param_hash()
        with clock.phase("score"):
            scores, batches = score_student(cfg, teacher, student, splits, seed, cache)
        assert student.param_hash() == before, "scoring mutated the student"
        save_scores(os.path.join(sdir, "scores.sdis"), scores, cfg.gamma, batches, cfg.score_epochs, cfg.score)
        ctx = SeedContext(seed, splits, teacher, student, cache, scores, clock.seconds["score"],
                          evaluate(teacher, splits.test), evaluate(student, splits.test),
                          tres.epochs_run, sres.epochs_run)
        self.seed_info.append({"seed": seed, "teacher_acc": ctx.teacher_acc, "student_acc": ctx.student_acc,
                               "teacher_epochs": ctx.teacher_epochs, "student_epochs": ctx.student_epochs,
                               "teacher_params": teacher.num_parameters(),
                               "student_params": student.num_parameters(),
                               "prepare_s": time.perf_counter() - t0})
        self.progress(f"seed {seed}: teacher acc {ctx.teacher_acc:.4f} ({tres.epochs_run} ep), "
                      f"student acc {ctx.student_acc:.4f} ({sres.epochs_run} ep)")
        return ctx

    # -- methods --------------------------------------------------------------

    def _ours(self, ctx, p, method, run_id):
        cfg = self.cfg
        clock = PhaseClock()
        clock.seconds["score"] = ctx.score_seconds
        with clock.phase("prune"):
            mask = global_mask(ctx.scores, p)
            model = apply_mask(ctx.student.clone(), mask)
        with clock.phase("retrain"):
            if method == "ours-no-kd":
                res = retrain_plain(model, mask, ctx.splits.train, ctx.splits.val, cfg.retrain_optim,
                                    seed=ctx.seed, run_id=run_id)
            else:
                dcfg = type(cfg.retrain)(_temperature(method), cfg.retrain.alpha, cfg.retrain.beta,
                                         cfg.retrain.epsilon)
                res = retrain_kd(model, ctx.teacher, mask, ctx.splits.train, ctx.splits.val, dcfg,
                                 cfg.retrain_optim, seed=ctx.seed, run_id=run_id, cache=ctx.cache)
        return model, mask, clock, res.epochs_run, res.history

    def _magnitude(self, ctx, p, run_id):
        clock = PhaseClock()
        with clock.phase("prune"):
            model = ctx.student.clone()
            mask = global_mask(magnitude_scores(model), p)
            apply_mask(model, mask)
        with clock.phase("retrain"):
            res = retrain_plain(model, mask, ctx.splits.train, ctx.splits.val, self.cfg.retrain_optim,
                                seed=ctx.seed, run_id=run_id)
        return model, mask, clock, res.epochs_run, res.history

    def _lth(self, ctx, p, run_id):
        cfg = self.cfg
        clock = PhaseClock()
        with clock.phase("warmup"):
            model, snapshot = build_model(model_config(cfg.student_arch, ctx.splits), ctx.seed)
            warm = fit(model, ctx.splits.train, ctx.splits.val, ce_loss_fn, cfg.optim, ctx.seed,
                       phase="lth-warmup", run_id=run_id, epochs=cfg.lth_warmup_epochs, early_stopping=False)
        with clock.phase("prune"):
            mask = global_mask(magnitude_scores(model), p)
            lth_reset(model, snapshot, mask)
        with clock.phase("retrain"):
            res = retrain_plain(model, mask, ctx.splits.train, ctx.splits.val, cfg.retrain_optim,
                                seed=ctx.seed, run_id=run_id)
        return model, mask, clock, res.epochs_run, warm.history + res.history

    def _iterative(self, ctx, p, run_id):
        """Magnitude prune-retrain cycles on a geometric schedule, each cycle
        with the same retraining budget as a single one-shot retrain."""
        cfg = self.cfg
        clock = PhaseClock()
        model = ctx.student.clone()
        keep = None
        epochs, history = 0, []
        for step, target in enumerate(_iterative_schedule(p, cfg.iterative_cycles)):
            with clock.phase("prune"):
                scores = magnitude_scores(model)
                if keep is not None:
                    # retained entries move above every pruned one; order among them is unchanged
                    scores = {n: s.astype(np.float64) + keep.masks[n] for n, s in scores.items()}
                keep = global_mask(scores, target)
                apply_mask(model, keep)
            with clock.phase("retrain"):
                res = retrain_plain(model, keep, ctx.splits.train, ctx.splits.val, cfg.retrain_optim,
                                    seed=ctx.seed, run_id=run_id, phase=f"retrain-cycle{step}")
            epochs += res.epochs_run
            history += res.history
        keep.target_sparsity = p
        return model, keep, clock, epochs, history

    def run_cell(self, ctx, p, method):
        run_id = f"s{ctx.seed}-{method}-p{p}"
        if method.startswith("ours"):
            model, mask, clock, epochs, history = self._ours(ctx, p, method, run_id)
        elif method == "magnitude-oneshot":
            model, mask, clock, epochs, history = self._magnitude(ctx, p, run_id)
        elif method == "lth-oneshot":
            model, mask, clock, epochs, history = self._lth(ctx, p, run_id)
        else:
            model, mask, clock, epochs, history = self._iterative(ctx, p, run_id)
        append_metrics(self.metrics_path, history)
        sdir = os.path.join(self.out, f"seed{ctx.seed}")
        save_checkpoint(model, os.path.join(sdir, f"{method}-p{p}.sdck"))
        save_mask(mask, os.path.join(sdir, f"{method}-p{p}.sdmk"))
        zeros, d = sparsity_of(model)
        rec = RunRecord(run_id, ctx.seed, method, p, mask.retained, d, zeros / d,
                        evaluate(model, ctx.splits.test), epochs, clock.total, dict(clock.seconds))
        self.records.append(rec)
        self.progress(f"  {run_id}: acc {rec.accuracy:.4f} sparsity {rec.sparsity:.4f} "
                      f"epochs {epochs} time {rec.total_s:.1f}s")
        return rec

    def run(self):
        cfg = self.cfg
        splits = load_splits(cfg.dataset)
        for seed in cfg.seeds:
            ctx = self.prepare_seed(seed, splits)
            for p in cfg.sparsities:
                for method in cfg.methods:
                    self.run_cell(ctx, p, method)
        self.write()
        return self.records

    # -- reporting ------------------------------------------------------------

    def write(self):
        write_records_csv(os.path.join(self.out, "runs.csv"), self.records)
        with open(os.path.join(self.out, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(render_report(self.records, self.seed_info))
        with open(os.path.join(self.out, "seeds.json"), "w", encoding="utf-8") as fh:
            json.dump(self.seed_info, fh, indent=2)


def write_records_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow(r.row())


def read_records_csv(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(RunRecord(row["run_id"], int(row["seed"]), row["method"], float(row["target_sparsity"]),
                                 int(row["retained"]), int(row["total"]), float(row["sparsity"]),
                                 float(row["accuracy"]), int(row["retrain_epochs"]), float(row["total_s"]),
                                 json.loads(row["phase_seconds"])))
    return out


def cell_stats(records, method, p):
    rows = sorted((r for r in records if r.method == method and r.target_sparsity == p), key=lambda r: r.seed)
    acc = np.array([r.accuracy for r in rows])
    return {
        "seeds": [r.seed for r in rows],
        "acc": acc,
        "mean": float(acc.mean()) if acc.size else float("nan"),
        "min": float(acc.min()) if acc.size else float("nan"),
        "max": float(acc.max()) if acc.size else float("nan"),
        "seconds": float(sum(r.total_s for r in rows)),
        "epochs": float(np.mean([r.retrain_epochs for r in rows])) if rows else float("nan"),
    }


def latency_ratio(records, method, baseline, p):
    """Total wall-clock of ``method`` over ``baseline`` at sparsity ``p`` (all seeds)."""
    a = cell_stats(records, method, p)["seconds"]
    b = cell_stats(records, baseline, p)["seconds"]
    return a / b if b > 0 else float("nan")


def render_report(records, seed_info=()):
    methods = list(dict.fromkeys(r.method for r in records))
    ps = sorted({r.target_sparsity for r in records})
    lines = []
    if seed_info:
        lines.append("dense models (test accuracy)")
        for s in seed_info:
            lines.append(f"  seed {s['seed']}: teacher {s['teacher_acc']:.4f} ({s['teacher_params']} params), "
                         f"student {s['student_acc']:.4f} ({s['student_params']} params)")
        lines.append("")
    head = f"{'method':<20} {'p':>6} {'sparsity':>9} {'acc mean':>9} {'range':>17} {'epochs':>7} {'seconds':>9}"
    lines += [head, "-" * len(head)]
    for p in ps:
        for m in methods:
            st = cell_stats(records, m, p)
            if not st["seeds"]:
                continue
            sp = np.mean([r.sparsity for r in records if r.method == m and r.target_sparsity == p])
            lines.append(f"{m:<20} {p:>6.3f} {sp:>9.4f} {st['mean']:>9.4f} "
                         f"[{st['min']:.4f}, {st['max']:.4f}] {st['epochs']:>7.1f} {st['seconds']:>9.1f}")
        lines.append("")
    totals = {m: sum(r.total_s for r in records if r.method == m) for m in methods}
    lines.append("wall-clock totals (s): " + ", ".join(f"{m}={t:.1f}" for m, t in totals.items()))
    if "iterative-magnitude" in methods:
        for m in [m for m in methods if m.startswith("ours")]:
            ratios = [f"p={p}: {latency_ratio(records, m, 'iterative-magnitude', p):.3f}" for p in ps]
            lines.append(f"latency {m} / iterative-magnitude: " + ", ".join(ratios))
    return "\n".join(lines) + "\n"


def expected_retained(p, total):
    return retained_count(p, total)
