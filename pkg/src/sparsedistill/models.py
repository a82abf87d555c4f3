"""Desk-scale teacher/student architectures.

A :class:`Model` is an ordered list of :class:`LayerSpec` plus a name-keyed
parameter map (``"<layer index>.weight"`` / ``"<layer index>.bias"``). Only
linear and conv2d weights are prunable.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor, default_dtype

LAYER_KINDS = ("linear", "conv2d", "relu", "maxpool2d", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    """One layer. ``dims`` by kind:

    * linear: ``(in_features, out_features)``
    * conv2d: ``(in_channels, out_channels, kernel, stride, padding)``
    * maxpool2d: ``(window,)``
    * relu, flatten: ``()``
    """

    kind: str
    dims: tuple = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def prunable(self):
        return self.kind in ("linear", "conv2d")

    def param_shapes(self):
        if self.kind == "linear":
            fin, fout = self.dims
            return {"weight": (fout, fin), "bias": (fout,)}
        if self.kind == "conv2d":
            cin, cout, k = self.dims[:3]
            return {"weight": (cout, cin, k, k), "bias": (cout,)}
        return {}

    def out_shape(self, shape):
        """Per-sample output shape for per-sample input ``shape``."""
        if self.kind == "linear":
            if shape != (self.dims[0],):
                raise DimensionError(f"linear{self.dims} cannot take input {shape}")
            return (self.dims[1],)
        if self.kind == "conv2d":
            cin, cout, k, s, p = self.dims
            if len(shape) != 3 or shape[0] != cin:
                raise DimensionError(f"conv2d{self.dims} cannot take input {shape}")
            h, w = shape[1] + 2 * p, shape[2] + 2 * p
            if k > h or k > w:
                raise DimensionError(f"conv2d kernel {k} larger than padded input {(h, w)}")
            return (cout, (h - k) // s + 1, (w - k) // s + 1)
        if self.kind == "maxpool2d":
            (k,) = self.dims
            if len(shape) != 3 or k > shape[1] or k > shape[2]:
                raise DimensionError(f"maxpool2d({k}) cannot take input {shape}")
            return (shape[0], shape[1] // k, shape[2] // k)
        if self.kind == "flatten":
            return (int(np.prod(shape)),)
        return shape


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    input_shape: tuple
    num_classes: int


def _mlp(input_shape, c, hidden):
    f = int(np.prod(input_shape))
    layers = [LayerSpec("flatten")] if len(input_shape) > 1 else []
    for h in hidden:
        layers += [LayerSpec("linear", (f, h)), LayerSpec("relu")]
        f = h
    return layers + [LayerSpec("linear", (f, c))]


def _cnn(input_shape, c, channels, hidden):
    if len(input_shape) != 3:
        raise ConfigError(f"cnn architectures need a (C, H, W) input shape, got {input_shape}")
    cin, h, w = input_shape
    if h < 4 or w < 4:
        raise ConfigError(f"cnn architectures need H, W >= 4, got {input_shape}")
    layers = []
    for cout in channels:
        layers += [LayerSpec("conv2d", (cin, cout, 3, 1, 1)), LayerSpec("relu"), LayerSpec("maxpool2d", (2,))]
        cin, h, w = cout, h // 2, w // 2
    layers.append(LayerSpec("flatten"))
    f = cin * h * w
    for hdim in hidden:
        layers += [LayerSpec("linear", (f, hdim)), LayerSpec("relu")]
        f = hdim
    return layers + [LayerSpec("linear", (f, c))]


ARCHITECTURES = {
    "mlp-small": lambda s, c: _mlp(s, c, (32,)),
    "mlp-teacher": lambda s, c: _mlp(s, c, (256, 128)),
    "cnn-small": lambda s, c: _cnn(s, c, (8, 16), (64,)),
    "cnn-teacher": lambda s, c: _cnn(s, c, (16, 32), (128,)),
}

# teacher/student pairs used by the pipeline defaults
ARCH_PAIRS = {"mlp-small": "mlp-teacher", "cnn-small": "cnn-teacher"}


class Model:
    def __init__(self, layers, params, input_shape, arch="custom"):
        self.layers = list(layers)
        self.params = dict(params)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.arch = arch
        self.training = True
        self._validate()

    def _validate(self):
        shape = self.input_shape
        for i, spec in enumerate(self.layers):
            for pname, pshape in spec.param_shapes().items():
                name = f"{i}.{pname}"
                if name not in self.params:
                    raise ContractError(f"missing parameter {name}")
                if self.params[name].shape != pshape:
                    raise DimensionError(f"parameter {name} has shape {self.params[name].shape}, expected {pshape}")
            shape = spec.out_shape(shape)
        if len(shape) != 1:
            raise DimensionError(f"model output per sample must be a vector, got {shape}")
        self.num_classes = shape[0]

    # train/eval are no-ops (no batch-norm or dropout) kept for call-site clarity
    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise DimensionError(f"batch shape {x.shape} does not match input shape {self.input_shape}")
        for i, spec in enumerate(self.layers):
            if spec.kind == "linear":
                x = F.linear(x, self.params[f"{i}.weight"], self.params[f"{i}.bias"])
            elif spec.kind == "conv2d":
                _, _, _, s, p = spec.dims
                x = F.add_bias(F.conv2d(x, self.params[f"{i}.weight"], s, p), self.params[f"{i}.bias"])
            elif spec.kind == "relu":
                x = F.relu(x)
            elif spec.kind == "maxpool2d":
                x = F.maxpool2d(x, spec.dims[0])
            else:
                x = F.flatten(x)
        return x

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def named_parameters(self):
        return list(self.params.items())

    def parameters(self):
        return list(self.params.values())

    def prunable_names(self):
        return [f"{i}.weight" for i, s in enumerate(self.layers) if s.prunable]

    def num_prunable(self):
        return sum(self.params[n].size for n in self.prunable_names())

    def num_parameters(self):
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        for k, v in state.items():
            if k not in self.params or self.params[k].shape != v.shape:
                raise ContractError(f"state entry {k} does not match the model")
            self.params[k].data[...] = v

    def clone(self):
        params = {k: Tensor(v.data, requires_grad=v.requires_grad, dtype=v.dtype) for k, v in self.params.items()}
        m = Model(self.layers, params, self.input_shape, self.arch)
        m.training = self.training
        return m

    def param_hash(self):
        h = hashlib.sha256()
        for k in sorted(self.params):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.params[k].data).tobytes())
        return h.hexdigest()

    def requires_grad_(self, flag):
        for p in self.params.values():
            p.requires_grad = flag
        return self


@dataclass
class InitSnapshot:
    """Copy of every parameter at initialization (theta_0)."""

    params: dict = field(default_factory=dict)

    @classmethod
    def capture(cls, model):
        return cls(model.state_dict())


def build_model(config, seed, dtype=None):
    """Build ``config.arch`` with fan-in scaled uniform init; returns ``(model, snapshot)``."""
    if config.arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {config.arch!r}; choose from {sorted(ARCHITECTURES)}")
    if config.num_classes < 2:
        raise ConfigError("num_classes must be >= 2")
    dtype = dtype or default_dtype()
    layers = ARCHITECTURES[config.arch](tuple(config.input_shape), int(config.num_classes))
    rng = np.random.default_rng(seed)
    params = {}
    last = max(i for i, spec in enumerate(layers) if spec.prunable)
    for i, spec in enumerate(layers):
        shapes = spec.param_shapes()
        if not shapes:
            continue
        wshape = shapes["weight"]
        fan_in = int(np.prod(wshape[1:]))
        # He-uniform ahead of a ReLU; the logit layer gets gain 1 so initial
        # logits stay O(1) and early high-lr steps don't kill the hidden units
        wb = np.sqrt((3.0 if i == last else 6.0) / fan_in)
        bb = 1.0 / np.sqrt(fan_in)
        params[f"{i}.weight"] = Tensor(rng.uniform(-wb, wb, size=wshape), requires_grad=True, dtype=dtype)
        params[f"{i}.bias"] = Tensor(rng.uniform(-bb, bb, size=shapes["bias"]), requires_grad=True, dtype=dtype)
    model = Model(layers, params, config.input_shape, config.arch)
    return model, InitSnapshot.capture(model)


def magnitude_scores(model):
    """``|W|`` for every prunable weight."""
    return {n: np.abs(model.params[n].data) for n in model.prunable_names()}


def lth_reset(model, snapshot, mask):
    """Rewind to theta_0: retained weights and all biases take their snapshot
    values, pruned weights become exactly zero."""
    for name, p in model.params.items():
        if name not in snapshot.params or snapshot.params[name].shape != p.shape:
            raise ContractError(f"snapshot does not match model parameter {name}")
    for name, m in mask.masks.items():
        if name not in model.params or model.params[name].shape != m.shape:
            raise ContractError(f"mask entry {name} does not match the model")
    for name, p in model.params.items():
        init = snapshot.params[name].astype(p.dtype)
        if name in mask.masks:
            init = np.where(mask.masks[name], init, np.zeros_like(init))
        p.data[...] = init
        p.grad = None
    return model
