"""Two-phase training loop and checkpoint lifecycle."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_model, save_checkpoint, shape_audit
from .config import RunConfig, save_config
from .diffusion import NoiseSchedule, _phase1, _phase2, make_schedule, substream
from .frequency import FreqLossConfig
from .imaging import PairedDataset, make_batch
from .optim import Adam, AdamState
from .unet import DenoiserNet, freeze_uncertainty

__all__ = ["TrainResult", "train", "build_schedule", "learning_rate"]

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    net: DenoiserNet
    history: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None
    step: int = 0


def build_schedule(cfg: RunConfig) -> NoiseSchedule:
    s = cfg.schedule
    return make_schedule(s.T, s.beta_start, s.beta_end, s.kind)


def learning_rate(cfg: RunConfig, step: int) -> float:
    """Learning rate for 1-based ``step``."""
    t = cfg.train
    if t.lr_schedule == "constant" or t.steps <= 1:
        return t.lr
    frac = (step - 1) / (t.steps - 1)
    return t.lr_min + 0.5 * (t.lr - t.lr_min) * (1.0 + math.cos(math.pi * frac))


def _freq_cfg(cfg: RunConfig) -> FreqLossConfig:
    return FreqLossConfig(cfg.freq.gamma_amp, cfg.freq.gamma_pha, cfg.freq.fft_mode)


def _prepare(cfg: RunConfig, resume) -> tuple[DenoiserNet, AdamState, int]:
    phase = cfg.train.phase
    if resume:
        net, header, state = load_model(resume)
        diffs = shape_audit(DenoiserNet(cfg.model), {n: p.data for n, p in net.named_parameters()})
        if diffs:
            raise CheckpointError(f"{resume} is incompatible with the configured model:\n  " + "\n  ".join(diffs))
        if header["phase"] != phase:
            raise CheckpointError(f"{resume} is a phase-{header['phase']} checkpoint, config asks for phase {phase}")
        if phase == 2:
            freeze_uncertainty(net)
        return net, state, int(header["step"])
    if phase == 1:
        return DenoiserNet(cfg.model), AdamState(), 0
    if phase != 2:
        raise ValueError(f"phase must be 1 or 2, got {phase}")
    src = cfg.train.init_checkpoint
    if not src or not Path(src).is_file():
        raise FileNotFoundError(f"phase 2 needs an existing phase-1 checkpoint (train.init_checkpoint={src!r})")
    net, header, _ = load_model(src)
    if header["phase"] != 1:
        raise CheckpointError(f"{src} is not a phase-1 checkpoint")
    diffs = shape_audit(DenoiserNet(cfg.model), {n: p.data for n, p in net.named_parameters()})
    if diffs:
        raise CheckpointError(f"{src} is incompatible with the configured model:\n  " + "\n  ".join(diffs))
    freeze_uncertainty(net)
    return net, AdamState(), 0


def train(cfg: RunConfig, dataset=None, resume=None, out_dir=None, on_log=None,
          eval_fn=None) -> TrainResult:
    """Train one phase for ``cfg.train.steps`` total steps.

    ``dataset`` defaults to the paired PNG tree at ``cfg.data``; any object with
    ``len()`` and indexing to ``(low, high)`` pairs works. ``out_dir=None``
    keeps everything in memory. ``eval_fn(net, step)`` may return extra log fields;
    a truthy ``"stop"`` field ends the run after that step.
    """
    if dataset is None:
        dataset = PairedDataset(cfg.data.root, cfg.data.split)
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    net, state, start = _prepare(cfg, resume)
    phase = cfg.train.phase
    sched = build_schedule(cfg)
    freq_cfg = _freq_cfg(cfg)
    opt = Adam(net.parameters(), lr=cfg.train.lr)
    opt.state = state

    seed = cfg.train.seed
    data_rng = substream(seed + start, "data")
    loss_rng = substream(seed + start, "diffusion")
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / f"config_phase{phase}.ini")

    result = TrainResult(net, step=start)
    t0 = time.perf_counter()
    log_every = max(1, cfg.io.log_interval)
    for step in range(start + 1, cfg.train.steps + 1):
        x0, y = make_batch(dataset, cfg.train.batch, cfg.train.patch, data_rng, dtype=net.dtype)
        opt.lr = learning_rate(cfg, step)
        opt.zero_grad()
        if phase == 1:
            loss, terms = _phase1(net, x0, y, sched, loss_rng)
        else:
            loss, terms = _phase2(net, x0, y, sched, freq_cfg, loss_rng, cfg.freq.t_draw)
        loss.backward()
        opt.step()
        if not np.isfinite(terms["loss"]):
            raise FloatingPointError(f"loss became non-finite at step {step}")
        if step == start + 1 or step % log_every == 0 or step == cfg.train.steps:
            rec = {"step": step, **terms, "lr": opt.lr, "time": time.perf_counter() - t0}
            if phase == 2 and step == start + 1:
                rec["freq_to_noise"] = terms["freq"] / max(terms["noise"], 1e-12)
            if eval_fn is not None:
                rec.update(eval_fn(net, step) or {})
            result.history.append(rec)
            if on_log:
                on_log(rec)
            log.info("phase %d step %d %s", phase, step, rec)
        if out and cfg.io.checkpoint_interval and step % cfg.io.checkpoint_interval == 0:
            save_checkpoint(out / f"phase{phase}_step{step}.ckpt", net, cfg.to_dict(), step, phase, opt.state)
        result.step = step
        if result.history and result.history[-1]["step"] == step and result.history[-1].get("stop"):
            break
    if out:
        result.checkpoint = save_checkpoint(
            out / f"phase{phase}_last.ckpt", net, cfg.to_dict(), result.step, phase, opt.state
        )
        _write_log(out / f"train_phase{phase}.tsv", result.history)
        from .plotting import plot_training_curves

        plot_training_curves(result.history, out / f"train_phase{phase}.png", phase=phase)
    return result


def _write_log(path: Path, history: list[dict]) -> None:
    keys = []
    for rec in history:
        keys += [k for k in rec if k not in keys]
    lines = ["\t".join(keys)]
    lines += ["\t".join(str(rec.get(k, "")) for k in keys) for rec in history]
    path.write_text("\n".join(lines) + "\n")
