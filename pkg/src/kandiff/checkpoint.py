"""Checkpoint container: a JSON header followed by little-endian raw buffers.

Layout::

    KANDIFF-CKPT\\n
    <header byte length, ASCII decimal>\\n
    <UTF-8 JSON header>
    <raw tensor bytes, concatenated in header order>

The header carries ``version``, the resolved run config, training metadata and
one entry per tensor with ``name``, ``shape``, ``dtype`` and ``offset``/``nbytes``
relative to the start of the buffer section.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .optim import AdamState
from .unet import DenoiserConfig, DenoiserNet

__all__ = ["CheckpointError", "FORMAT_VERSION", "save_checkpoint", "read_checkpoint", "load_model"]

MAGIC = b"KANDIFF-CKPT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, net: DenoiserNet, run_config: dict | None = None, step: int = 0,
                    phase: int = 1, optim: AdamState | None = None, extra: dict | None = None) -> Path:
    tensors: list[tuple[str, np.ndarray]] = [(n, p.data) for n, p in net.named_parameters()]
    frozen = [n for n, p in net.named_parameters() if p.frozen]
    if optim is not None:
        tensors += [(f"optim.m.{k}", v) for k, v in optim.m.items()]
        tensors += [(f"optim.v.{k}", v) for k, v in optim.v.items()]
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors:
        le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        raw = le.tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": le.dtype.str,
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    header = {
        "version": FORMAT_VERSION,
        "model": net.cfg.to_dict(),
        "config": run_config or {},
        "step": int(step),
        "phase": int(phase),
        "frozen": frozen,
        "optim_step": int(optim.step) if optim is not None else 0,
        "extra": extra or {},
        "tensors": entries,
    }
    hbytes = json.dumps(header, indent=1).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{len(hbytes)}\n".encode())
        fh.write(hbytes)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)
    return path


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {path} not found")
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    nl = raw.index(b"\n", len(MAGIC))
    hlen = int(raw[len(MAGIC) : nl])
    start = nl + 1
    header = json.loads(raw[start : start + hlen])
    if "version" not in header:
        raise CheckpointError(f"{path}: header has no version field")
    if header["version"] != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header['version']}")
    base = start + hlen
    arrays = {}
    for e in header["tensors"]:
        lo = base + e["offset"]
        buf = raw[lo : lo + e["nbytes"]]
        if len(buf) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated buffer for {e['name']}")
        arr = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    return header, arrays


def shape_audit(net: DenoiserNet, arrays: dict[str, np.ndarray]) -> list[str]:
    """Differences between a model's parameters and checkpoint tensors, by name."""
    params = dict(net.named_parameters())
    stored = {k: v for k, v in arrays.items() if not k.startswith("optim.")}
    diffs = [f"missing in checkpoint: {n} {params[n].shape}" for n in params if n not in stored]
    diffs += [f"not in model: {n} {tuple(stored[n].shape)}" for n in stored if n not in params]
    diffs += [
        f"shape mismatch: {n} model {params[n].shape} vs checkpoint {tuple(stored[n].shape)}"
        for n in params
        if n in stored and tuple(stored[n].shape) != params[n].shape
    ]
    return diffs


def load_model(path, model_cfg: DenoiserConfig | None = None) -> tuple[DenoiserNet, dict, AdamState]:
    """Rebuild the network (from the stored config unless one is given) and restore it.

    Raises :class:`CheckpointError` listing every mismatched parameter.
    """
    header, arrays = read_checkpoint(path)
    cfg = model_cfg or DenoiserConfig(**header["model"])
    net = DenoiserNet(cfg)
    diffs = shape_audit(net, arrays)
    if diffs:
        raise CheckpointError(f"{path} does not fit the model:\n  " + "\n  ".join(diffs))
    params = dict(net.named_parameters())
    for name, p in params.items():
        p.data = np.array(arrays[name], dtype=p.dtype, copy=True)
        p.frozen = name in header.get("frozen", [])
    state = AdamState(step=header.get("optim_step", 0))
    for key, arr in arrays.items():
        if key.startswith("optim.m."):
            state.m[key[len("optim.m."):]] = np.array(arr)
        elif key.startswith("optim.v."):
            state.v[key[len("optim.v."):]] = np.array(arr)
    return net, header, state
