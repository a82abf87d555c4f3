import hashlib
import os
import struct

import numpy as np
import pytest

from sparsedistill.distillation import DistillConfig
from sparsedistill.errors import FormatError
from sparsedistill.models import ModelConfig, build_model
from sparsedistill.pruning import global_mask
from sparsedistill.serialization import (
    checkpoint_bytes,
    load_checkpoint,
    load_mask,
    load_scores,
    save_checkpoint,
    save_mask,
    save_scores,
)


@pytest.fixture
def model():
    m, _ = build_model(ModelConfig("cnn-small", (1, 8, 8), 4), 3)
    return m


def _param_digest(m):
    h = hashlib.sha256()
    for k in sorted(m.params):
        h.update(m.params[k].data.tobytes())
    return h.hexdigest()


def test_checkpoint_roundtrip_bit_exact(model, tmp_path):
    path = tmp_path / "m.sdck"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert _param_digest(back) == _param_digest(model)
    assert back.layers == model.layers
    assert back.input_shape == model.input_shape and back.arch == model.arch
    assert list(back.params) == list(model.params)
    assert checkpoint_bytes(back) == path.read_bytes()


def test_checkpoint_header_layout(model, tmp_path):
    buf = checkpoint_bytes(model)
    assert buf[:4] == b"SDCK"
    version, layers = struct.unpack("<II", buf[4:12])
    assert version == 1 and layers == len(model.layers)


def test_wrong_magic(model, tmp_path):
    path = tmp_path / "m.sdck"
    path.write_bytes(b"XXXX" + checkpoint_bytes(model)[4:])
    with pytest.raises(FormatError, match="magic") as exc:
        load_checkpoint(path)
    assert exc.value.offset == 0


def test_wrong_version(model, tmp_path):
    buf = bytearray(checkpoint_bytes(model))
    buf[4:8] = struct.pack("<I", 2)
    path = tmp_path / "m.sdck"
    path.write_bytes(bytes(buf))
    with pytest.raises(FormatError, match="version"):
        load_checkpoint(path)


@pytest.mark.parametrize("cut", [3, 10, 50, -1])
def test_truncated_checkpoint_names_offset(model, tmp_path, cut):
    buf = checkpoint_bytes(model)
    path = tmp_path / "m.sdck"
    path.write_bytes(buf[:cut] if cut > 0 else buf[:cut])
    with pytest.raises(FormatError, match="truncated") as exc:
        load_checkpoint(path)
    assert exc.value.offset is not None


def test_small_checkpoint_smaller_than_teacher(tmp_path):
    s, _ = build_model(ModelConfig("cnn-small", (1, 8, 8), 4), 0)
    t, _ = build_model(ModelConfig("cnn-teacher", (1, 8, 8), 4), 0)
    save_checkpoint(s, tmp_path / "s")
    save_checkpoint(t, tmp_path / "t")
    assert os.path.getsize(tmp_path / "s") < os.path.getsize(tmp_path / "t")


def test_scores_roundtrip(model, tmp_path, rng):
    scores = {n: rng.random(model.params[n].shape).astype(np.float32) for n in model.prunable_names()}
    cfg = DistillConfig(5.0, 0.7, 0.5)
    save_scores(tmp_path / "s.sdis", scores, 0.9, 12, 3, cfg)
    back, meta = load_scores(tmp_path / "s.sdis")
    assert list(back) == list(scores)
    for k in scores:
        assert back[k].tobytes() == scores[k].tobytes()
    assert meta == {"gamma": 0.9, "batches": 12, "epochs": 3, "temperature": 5.0,
                    "alpha": 0.7, "beta": 0.5, "epsilon": 1e-6}
    raw = (tmp_path / "s.sdis").read_bytes()
    (tmp_path / "bad").write_bytes(b"SDCK" + raw[4:])
    with pytest.raises(FormatError):
        load_scores(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:-5])
    with pytest.raises(FormatError, match="truncated"):
        load_scores(tmp_path / "short")


def test_mask_roundtrip(model, tmp_path, rng):
    scores = {n: rng.random(model.params[n].shape) for n in model.prunable_names()}
    mask = global_mask(scores, 0.83)
    save_mask(mask, tmp_path / "m.sdmk")
    back = load_mask(tmp_path / "m.sdmk")
    assert (back.target_sparsity, back.retained, back.threshold) == (0.83, mask.retained, mask.threshold)
    for k in mask.masks:
        np.testing.assert_array_equal(back.masks[k], mask.masks[k])
    raw = (tmp_path / "m.sdmk").read_bytes()
    # first layer's bits are packed MSB-first right after its name and shape
    first = model.prunable_names()[0]
    packed = np.packbits(mask.masks[first].reshape(-1)).tobytes()
    name = first.encode()
    start = raw.index(name) + len(name) + 4 + 16
    assert raw[start:start + len(packed)] == packed
    (tmp_path / "bad").write_bytes(b"SDMX" + raw[4:])
    with pytest.raises(FormatError):
        load_mask(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        load_mask(tmp_path / "short")
