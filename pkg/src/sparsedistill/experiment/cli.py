"""``sparsedistill`` command-line entry point."""

import argparse
import csv
import logging
import math
import os
import sys

from ..distillation import DistillConfig, TeacherCache
from ..errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    MissingArtifactError,
    NumericalError,
    ValidationError,
)
from ..pruning import apply_mask, global_mask
from ..serialization import load_checkpoint, load_mask, load_scores, save_checkpoint, save_mask, save_scores
from ..sparse_retrain import retrain_kd, retrain_plain
from ..tensor import default_dtype, set_precision
from ..data import write_manifest
from ..training import EpochMetrics, append_metrics, evaluate_full
from .compare import RECORD_FIELDS, Comparison, RunRecord, render_report
from .config import METHODS, EXTRA_METHODS, ExperimentConfig
from .pipeline import (
    PhaseClock,
    distill_student,
    load_splits,
    require_file,
    score_student,
    sparsity_of,
    teacher_seed,
    train_teacher,
)

log = logging.getLogger("sparsedistill")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_MISSING = 0, 1, 2, 3, 4


def _global_flags(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=default(None), help="experiment config file (INI sections)")
    parser.add_argument("--seed", type=int, default=default(None), help="seed for single-step commands")
    parser.add_argument("--out", default=default(None), help="output directory (overrides [run] out)")
    parser.add_argument("--precision", type=int, choices=(32, 64), default=default(None))
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsedistill",
        description="Teacher-guided one-shot pruning with distillation-aware retraining.")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train-teacher", parents=[common], help="train the dense teacher on cross-entropy")

    p = sub.add_parser("distill", parents=[common], help="KD fine-tune a dense student")
    p.add_argument("--teacher", help="teacher checkpoint (default OUT/teacher.sdck)")

    p = sub.add_parser("score", parents=[common], help="teacher-guided importance scores")
    p.add_argument("--teacher")
    p.add_argument("--student")

    p = sub.add_parser("prune", parents=[common], help="one-shot global prune at sparsity P")
    p.add_argument("--sparsity", type=float, required=True)
    p.add_argument("--student")
    p.add_argument("--scores")

    p = sub.add_parser("retrain", parents=[common], help="mask-preserving retraining")
    p.add_argument("--mode", choices=("plain", "kd"), required=True)
    p.add_argument("--sparsity", type=float, help="selects OUT/pruned-pP.sdck and OUT/mask-pP.sdmk")
    p.add_argument("--checkpoint")
    p.add_argument("--mask")
    p.add_argument("--teacher")
    p.add_argument("--temperature", type=float, help="override [distill.retrain] temperature")

    p = sub.add_parser("eval", parents=[common], help="accuracy of a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")

    p = sub.add_parser("compare", parents=[common], help="run every method over seeds and sparsities")
    p.add_argument("--methods", help=f"comma list from {', '.join(METHODS + EXTRA_METHODS)}")
    p.add_argument("--sparsities", help="comma list overriding [prune] sparsities")
    p.add_argument("--seeds", help="comma list overriding [run] seeds")

    p = sub.add_parser("write-config", parents=[common], help="write the effective config to a file")
    p.add_argument("path")
    return parser


# -- helpers --------------------------------------------------------------------

def _resolve(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.out:
        cfg.out = args.out
    if args.precision:
        cfg.precision = args.precision
    cfg.validate()
    set_precision(cfg.precision)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    os.makedirs(cfg.out, exist_ok=True)
    return cfg, seed


def _path(cfg, given, default_name, what):
    return require_file(given or os.path.join(cfg.out, default_name), what)


def _load_model(path):
    model = load_checkpoint(path)
    dt = default_dtype()
    if model.dtype != dt:
        for p in model.parameters():
            p.data = p.data.astype(dt)
    return model


def _pname(p):
    return f"p{p:g}"


def append_records(path, records):
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        if new:
            w.writeheader()
        for r in records:
            w.writerow(r.row())


def _metrics(cfg):
    return os.path.join(cfg.out, "metrics.csv")


# -- commands ---------------------------------------------------------------------

def cmd_train_teacher(args, cfg, seed):
    splits = load_splits(cfg.dataset)
    write_manifest(os.path.join(cfg.out, "manifest.json"), splits, dataset_seed=cfg.dataset.seed,
                   kind=cfg.dataset.kind)
    teacher, res = train_teacher(cfg, splits, teacher_seed(seed), _metrics(cfg), run_id=f"s{seed}-teacher")
    path = os.path.join(cfg.out, "teacher.sdck")
    save_checkpoint(teacher, path)
    acc, _ = evaluate_full(teacher, splits.test)
    print(f"teacher {cfg.teacher_arch}: {teacher.num_parameters()} params, {res.epochs_run} epochs, "
          f"test acc {acc:.4f} -> {path}")


def cmd_distill(args, cfg, seed):
    teacher = _load_model(_path(cfg, args.teacher, "teacher.sdck", "teacher checkpoint"))
    splits = load_splits(cfg.dataset)
    student, _, res = distill_student(cfg, teacher, splits, seed, metrics_path=_metrics(cfg),
                                      run_id=f"s{seed}-student")
    path = os.path.join(cfg.out, "student.sdck")
    save_checkpoint(student, path)
    acc, _ = evaluate_full(student, splits.test)
    print(f"student {cfg.student_arch}: {student.num_parameters()} params, {res.epochs_run} epochs, "
          f"test acc {acc:.4f} -> {path}")


def cmd_score(args, cfg, seed):
    teacher = _load_model(_path(cfg, args.teacher, "teacher.sdck", "teacher checkpoint"))
    student = _load_model(_path(cfg, args.student, "student.sdck", "student checkpoint"))
    splits = load_splits(cfg.dataset)
    before = student.param_hash()
    scores, batches = score_student(cfg, teacher, student, splits, seed)
    if student.param_hash() != before:
        raise ContractError("scoring changed the student's parameters")
    path = os.path.join(cfg.out, "scores.sdis")
    save_scores(path, scores, cfg.gamma, batches, cfg.score_epochs, cfg.score)
    print(f"scored {sum(s.size for s in scores.values())} weights over {batches} batches -> {path}")


def cmd_prune(args, cfg, seed):
    student = _load_model(_path(cfg, args.student, "student.sdck", "student checkpoint"))
    scores, _ = load_scores(_path(cfg, args.scores, "scores.sdis", "score file"))
    if set(scores) != set(student.prunable_names()):
        raise ValidationError("score file does not match the student's prunable parameters")
    mask = global_mask({n: scores[n] for n in student.prunable_names()}, args.sparsity)
    apply_mask(student, mask)
    tag = _pname(args.sparsity)
    ckpt = os.path.join(cfg.out, f"pruned-{tag}.sdck")
    mpath = os.path.join(cfg.out, f"mask-{tag}.sdmk")
    save_checkpoint(student, ckpt)
    save_mask(mask, mpath)
    zeros, d = sparsity_of(student)
    print(f"pruned to sparsity {zeros / d:.6f} (k={mask.retained} of D={d}, tau={mask.threshold:.6g}) "
          f"-> {ckpt}, {mpath}")


def cmd_retrain(args, cfg, seed):
    if args.sparsity is None and not (args.checkpoint and args.mask):
        raise ConfigError("retrain needs --sparsity or both --checkpoint and --mask")
    tag = _pname(args.sparsity) if args.sparsity is not None else "custom"
    model = _load_model(_path(cfg, args.checkpoint, f"pruned-{tag}.sdck", "pruned checkpoint"))
    mask = load_mask(_path(cfg, args.mask, f"mask-{tag}.sdmk", "mask file"))
    splits = load_splits(cfg.dataset)
    clock = PhaseClock()
    run_id = f"s{seed}-retrain-{args.mode}-{tag}"
    with clock.phase("retrain"):
        if args.mode == "plain":
            res = retrain_plain(model, mask, splits.train, splits.val, cfg.retrain_optim, seed=seed, run_id=run_id)
            method = "ours-no-kd"
        else:
            teacher = _load_model(_path(cfg, args.teacher, "teacher.sdck", "teacher checkpoint"))
            r = cfg.retrain
            dcfg = DistillConfig(args.temperature or r.temperature, r.alpha, r.beta, r.epsilon)
            res = retrain_kd(model, teacher, mask, splits.train, splits.val, dcfg, cfg.retrain_optim, seed=seed,
                             run_id=run_id, cache=TeacherCache(teacher, splits.train, default_dtype()))
            method = f"ours-kd-T{dcfg.temperature:g}"
    append_metrics(_metrics(cfg), res.history)
    path = os.path.join(cfg.out, f"retrained-{args.mode}-{tag}.sdck")
    save_checkpoint(model, path)
    acc, _ = evaluate_full(model, splits.test)
    zeros, d = sparsity_of(model)
    rec = RunRecord(run_id, seed, method, mask.target_sparsity, mask.retained, d, zeros / d, acc,
                    res.epochs_run, clock.total, dict(clock.seconds))
    append_records(os.path.join(cfg.out, "runs.csv"), [rec])
    print(f"retrained ({args.mode}) {res.epochs_run} epochs, sparsity {rec.sparsity:.6f}, "
          f"test acc {acc:.4f} -> {path}")


def cmd_eval(args, cfg, seed):
    model = _load_model(require_file(args.checkpoint, "checkpoint"))
    splits = load_splits(cfg.dataset)
    ds = getattr(splits, args.split)
    acc, loss = evaluate_full(model, ds)
    zeros, d = sparsity_of(model)
    append_metrics(_metrics(cfg), [EpochMetrics(os.path.basename(args.checkpoint), f"eval-{args.split}", -1,
                                                math.nan, loss, acc, zeros / d, 0.0)])
    print(f"{args.split} accuracy {acc:.4f} (loss {loss:.4f}, sparsity {zeros / d:.6f}, n={len(ds)})")


def cmd_compare(args, cfg, seed):
    if args.methods:
        cfg.methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.sparsities:
        cfg.sparsities = tuple(float(p) for p in args.sparsities.split(","))
    if args.seeds:
        cfg.seeds = tuple(int(s) for s in args.seeds.split(","))
    cfg.validate()
    comp = Comparison(cfg, progress=lambda m: print(m, flush=True))
    comp.run()
    cfg.save(os.path.join(comp.out, "config.ini"))
    print()
    print(render_report(comp.records, comp.seed_info), end="")
    print(f"report: {os.path.join(comp.out, 'report.txt')}, table: {os.path.join(comp.out, 'runs.csv')}")


def cmd_write_config(args, cfg, seed):
    cfg.save(args.path)
    print(f"config written to {args.path}")


COMMANDS = {
    "train-teacher": cmd_train_teacher,
    "distill": cmd_distill,
    "score": cmd_score,
    "prune": cmd_prune,
    "retrain": cmd_retrain,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "write-config": cmd_write_config,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, seed = _resolve(args)
        COMMANDS[args.command](args, cfg, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, ValidationError, DimensionError, ContractError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        set_precision(32)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
