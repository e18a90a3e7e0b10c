import json

import numpy as np
import pytest

from kandiff.checkpoint import (
    MAGIC,
    CheckpointError,
    load_model,
    read_checkpoint,
    save_checkpoint,
    shape_audit,
)
from kandiff.optim import AdamState
from kandiff.unet import DenoiserConfig, DenoiserNet, freeze_uncertainty


@pytest.fixture
def net():
    return DenoiserNet(DenoiserConfig(base_channels=8, seed=2))


def test_roundtrip_restores_weights_flags_and_optimizer(tmp_path, net):
    freeze_uncertainty(net)
    name = "in_conv.weight"
    state = AdamState(step=7, m={name: np.full((8, 6, 3, 3), 0.5, np.float32)},
                      v={name: np.full((8, 6, 3, 3), 0.25, np.float32)})
    path = save_checkpoint(tmp_path / "a.ckpt", net, {"train": {"lr": 1.0}}, step=42, phase=2, optim=state)
    back, header, st = load_model(path)
    for (n1, p1), (n2, p2) in zip(net.named_parameters(), back.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.data, p2.data) and p1.dtype == p2.dtype
    assert back.uncertainty_frozen()
    assert header["step"] == 42 and header["phase"] == 2 and header["config"]["train"]["lr"] == 1.0
    assert st.step == 7 and np.array_equal(st.m[name], state.m[name]) and np.array_equal(st.v[name], state.v[name])


def test_file_layout(tmp_path, net):
    path = save_checkpoint(tmp_path / "a.ckpt", net)
    raw = path.read_bytes()
    assert raw.startswith(MAGIC)
    nl = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[nl + 1 : nl + 1 + int(raw[len(MAGIC) : nl])])
    assert header["version"] == 1
    assert all(e["dtype"].startswith("<") for e in header["tensors"])
    assert not (tmp_path / "a.ckpt.tmp").exists()


def _rewrite_header(path, edit):
    raw = path.read_bytes()
    nl = raw.index(b"\n", len(MAGIC))
    hlen = int(raw[len(MAGIC) : nl])
    header = json.loads(raw[nl + 1 : nl + 1 + hlen])
    edit(header)
    hb = json.dumps(header).encode()
    path.write_bytes(MAGIC + f"{len(hb)}\n".encode() + hb + raw[nl + 1 + hlen :])


def test_version_is_mandatory(tmp_path, net):
    path = save_checkpoint(tmp_path / "a.ckpt", net)
    _rewrite_header(path, lambda h: h.pop("version"))
    with pytest.raises(CheckpointError, match="version"):
        read_checkpoint(path)
    _rewrite_header(path, lambda h: h.update(version=99))
    with pytest.raises(CheckpointError, match="unsupported"):
        read_checkpoint(path)


def test_bad_magic_and_truncation(tmp_path, net):
    (tmp_path / "x.ckpt").write_bytes(b"garbage")
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(tmp_path / "x.ckpt")
    path = save_checkpoint(tmp_path / "a.ckpt", net)
    path.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(CheckpointError, match="truncated"):
        read_checkpoint(path)
    with pytest.raises(FileNotFoundError):
        read_checkpoint(tmp_path / "missing.ckpt")


def test_mismatch_reports_named_parameters(tmp_path, net):
    path = save_checkpoint(tmp_path / "a.ckpt", net)
    wider = DenoiserConfig(base_channels=16)
    with pytest.raises(CheckpointError) as err:
        load_model(path, wider)
    assert "in_conv.weight" in str(err.value) and "shape mismatch" in str(err.value)


def test_shape_audit_lists_missing_and_extra(net):
    arrays = {n: p.data for n, p in net.named_parameters()}
    arrays.pop("in_conv.bias")
    arrays["ghost.weight"] = np.zeros(3)
    diffs = shape_audit(net, arrays)
    assert any("missing in checkpoint: in_conv.bias" in d for d in diffs)
    assert any("not in model: ghost.weight" in d for d in diffs)
