"""Experiment configuration and its sectioned ``key = value`` file format."""

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from ..distillation import DistillConfig
from ..errors import ConfigError
from ..training import OptimConfig

METHODS = ("ours-kd-T3", "ours-kd-T5", "ours-no-kd", "lth-oneshot", "magnitude-oneshot")
EXTRA_METHODS = ("iterative-magnitude",)
DATASET_KINDS = ("synthetic", "idx", "csv")


@dataclass
class DatasetSpec:
    kind: str = "synthetic"
    classes: int = 10
    per_class: int = 300
    input_shape: tuple = (1, 28, 28)
    separation: float = 2.0
    noise: float = 9.0
    similarity: float = 0.6
    seed: int = 0
    # file-backed datasets: the training file is split into train/val
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_csv: str = ""
    test_csv: str = ""
    csv_header: bool = False
    csv_scale: float = 0.0
    val_fraction: float = 0.1


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    teacher_arch: str = "cnn-teacher"
    student_arch: str = "cnn-small"
    finetune: DistillConfig = field(default_factory=lambda: DistillConfig(3.0, 0.7, 0.5))
    score: DistillConfig = field(default_factory=lambda: DistillConfig(5.0, 0.7, 0.5))
    retrain: DistillConfig = field(default_factory=lambda: DistillConfig(3.0, 0.7, 0.5))
    sparsities: tuple = (0.5, 0.9, 0.95)
    gamma: float = 0.9
    score_epochs: int = 3
    optim: OptimConfig = field(default_factory=lambda: OptimConfig(lr=0.01, lr_min=0.001, max_epochs=20))
    retrain_optim: OptimConfig = field(default_factory=lambda: OptimConfig(lr=0.01, lr_min=0.001, max_epochs=30))
    seeds: tuple = (0, 1, 2, 3, 4)
    methods: tuple = METHODS
    lth_warmup_epochs: int = 1
    iterative_cycles: int = 5
    out: str = "runs"
    precision: int = 32

    def __post_init__(self):
        self.validate()

    def validate(self):
        self.sparsities = tuple(float(p) for p in self.sparsities)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.methods = tuple(self.methods)
        for p in self.sparsities:
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"sparsity targets must lie in [0, 1), got {p}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {list(self.seeds)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for m in self.methods:
            if m not in METHODS + EXTRA_METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {list(METHODS + EXTRA_METHODS)}")
        if self.dataset.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {self.dataset.kind!r}")
        ds = self.dataset
        if ds.kind == "synthetic" and not (ds.classes >= 2 and ds.per_class >= 10 and ds.separation > 0
                                           and ds.noise > 0 and 0.0 <= ds.similarity < 1.0):
            raise ConfigError("synthetic data needs classes >= 2, per_class >= 10, separation > 0, "
                              "noise > 0 and similarity in [0, 1)")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.score_epochs < 1 or self.lth_warmup_epochs < 0 or self.iterative_cycles < 1:
            raise ConfigError("score_epochs and iterative_cycles must be >= 1, lth_warmup_epochs >= 0")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision}")
        for o in (self.optim, self.retrain_optim):
            if o.lr <= 0 or o.lr_min < 0 or o.batch_size < 1 or o.max_epochs < 0 or o.patience < 1:
                raise ConfigError(f"invalid optimizer settings {o}")
            if not 0.0 <= o.momentum < 1.0:
                raise ConfigError(f"momentum must lie in [0, 1), got {o.momentum}")

    # -- file format --------------------------------------------------------

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp["dataset"] = {f.name: _fmt(getattr(self.dataset, f.name)) for f in fields(DatasetSpec)}
        cp["models"] = {"teacher": self.teacher_arch, "student": self.student_arch}
        for section, cfg in (("distill.finetune", self.finetune), ("distill.score", self.score),
                             ("distill.retrain", self.retrain)):
            cp[section] = {f.name: _fmt(getattr(cfg, f.name)) for f in fields(DistillConfig)}
        cp["distill.score"]["gamma"] = _fmt(self.gamma)
        cp["distill.score"]["epochs"] = _fmt(self.score_epochs)
        cp["prune"] = {"sparsities": _fmt(self.sparsities), "lth_warmup_epochs": _fmt(self.lth_warmup_epochs),
                       "iterative_cycles": _fmt(self.iterative_cycles)}
        optim = {f.name: _fmt(getattr(self.optim, f.name)) for f in fields(OptimConfig)}
        optim.update({f"retrain_{f.name}": _fmt(getattr(self.retrain_optim, f.name)) for f in fields(OptimConfig)})
        cp["optim"] = optim
        cp["run"] = {"seeds": _fmt(self.seeds), "methods": ", ".join(self.methods), "out": self.out,
                     "precision": _fmt(self.precision)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text, source="<string>"):
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        known = {"dataset", "models", "distill.finetune", "distill.score", "distill.retrain", "prune", "optim", "run"}
        unknown = set(cp.sections()) - known
        if unknown:
            raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
        base = cls()
        try:
            ds = _load_dataclass(cp, "dataset", base.dataset)
            kw = {"dataset": ds}
            if cp.has_section("models"):
                sec = cp["models"]
                _reject_unknown(sec, {"teacher", "student"})
                kw["teacher_arch"] = sec.get("teacher", base.teacher_arch)
                kw["student_arch"] = sec.get("student", base.student_arch)
            kw["finetune"] = _load_dataclass(cp, "distill.finetune", base.finetune)
            kw["score"] = _load_dataclass(cp, "distill.score", base.score, extra={"gamma", "epochs"})
            kw["retrain"] = _load_dataclass(cp, "distill.retrain", base.retrain)
            if cp.has_section("distill.score"):
                sec = cp["distill.score"]
                kw["gamma"] = float(sec.get("gamma", base.gamma))
                kw["score_epochs"] = int(sec.get("epochs", base.score_epochs))
            if cp.has_section("prune"):
                sec = cp["prune"]
                _reject_unknown(sec, {"sparsities", "lth_warmup_epochs", "iterative_cycles"})
                if "sparsities" in sec:
                    kw["sparsities"] = _floats(sec["sparsities"])
                kw["lth_warmup_epochs"] = int(sec.get("lth_warmup_epochs", base.lth_warmup_epochs))
                kw["iterative_cycles"] = int(sec.get("iterative_cycles", base.iterative_cycles))
            if cp.has_section("optim"):
                sec = cp["optim"]
                names = {f.name for f in fields(OptimConfig)}
                _reject_unknown(sec, names | {f"retrain_{n}" for n in names})
                kw["optim"] = _coerce_into(base.optim, {k: v for k, v in sec.items() if k in names})
                kw["retrain_optim"] = _coerce_into(
                    base.retrain_optim, {k[len("retrain_"):]: v for k, v in sec.items() if k.startswith("retrain_")})
            if cp.has_section("run"):
                sec = cp["run"]
                _reject_unknown(sec, {"seeds", "methods", "out", "precision"})
                if "seeds" in sec:
                    kw["seeds"] = tuple(int(s) for s in _items(sec["seeds"]))
                if "methods" in sec:
                    kw["methods"] = tuple(_items(sec["methods"]))
                kw["out"] = sec.get("out", base.out)
                kw["precision"] = int(sec.get("precision", base.precision))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise ConfigError(f"{source}: {exc}") from None
            raise ConfigError(f"{source}: bad value: {exc}") from None
        return cls(**kw)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_ini(text, source=str(path))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_ini())

    def with_overrides(self, **kw):
        return replace(self, **kw)


# -- helpers --------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _items(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def _floats(text):
    return tuple(float(s) for s in _items(text))


def _reject_unknown(section, allowed):
    extra = set(section.keys()) - set(allowed)
    if extra:
        raise ConfigError(f"[{section.name}] unknown key(s) {sorted(extra)}")


def _coerce(template, raw):
    if isinstance(template, bool):
        low = raw.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, tuple):
        return tuple(int(s) for s in _items(raw))
    return raw


def _coerce_into(obj, values):
    return replace(obj, **{k: _coerce(getattr(obj, k), v) for k, v in values.items()})


def _load_dataclass(cp, section, default, extra=()):
    if not cp.has_section(section):
        return default
    sec = cp[section]
    names = {f.name for f in fields(default)}
    _reject_unknown(sec, names | set(extra))
    return _coerce_into(default, {k: v for k, v in sec.items() if k in names})
