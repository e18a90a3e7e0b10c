"""Run configuration: dataclass sections, INI files and ``section.key=value`` overrides.

Precedence is defaults < preset < file < overrides.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .unet import DenoiserConfig

__all__ = [
    "ScheduleConfig",
    "TrainConfig",
    "FreqConfig",
    "DataConfig",
    "IOConfig",
    "RunConfig",
    "PRESETS",
    "load_config",
    "save_config",
]


@dataclass
class ScheduleConfig:
    T: int = 200
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    kind: str = "linear"


@dataclass
class TrainConfig:
    phase: int = 1
    steps: int = 2000
    batch: int = 8
    patch: int = 96
    lr: float = 1e-4
    # "constant" or "cosine" (decays lr to lr_min over the run)
    lr_schedule: str = "constant"
    lr_min: float = 1e-5
    seed: int = 0
    # phase 2 starts from this phase-1 checkpoint
    init_checkpoint: str = ""


@dataclass
class FreqConfig:
    gamma_amp: float = 0.01
    gamma_pha: float = 0.01
    # "uniform" reuses the drawn noise-loss timestep; an integer pins it
    t_draw: str = "uniform"
    fft_mode: str = "auto"


@dataclass
class DataConfig:
    root: str = "data"
    split: str = ""


@dataclass
class IOConfig:
    checkpoint_dir: str = "runs"
    log_interval: int = 50
    checkpoint_interval: int = 1000


@dataclass
class RunConfig:
    model: DenoiserConfig = field(default_factory=DenoiserConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    freq: FreqConfig = field(default_factory=FreqConfig)
    data: DataConfig = field(default_factory=DataConfig)
    io: IOConfig = field(default_factory=IOConfig)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            sec = getattr(self, f.name)
            d = dataclasses.asdict(sec)
            if "channel_mults" in d:
                d["channel_mults"] = list(d["channel_mults"])
            out[f.name] = d
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        for sec_name, values in d.items():
            for key, value in values.items():
                _set(cfg, sec_name, key, value)
        _revalidate(cfg)
        return cfg


# Full-scale iteration counts: 1e6 for phase 1, 2e6 for phase 2. Never the default.
PRESETS: dict[str, dict[str, str]] = {
    "desk": {},
    "tiny": {
        "model.base_channels": "8",
        "train.batch": "4",
        "train.patch": "48",
        "train.lr": "1e-3",
        "train.lr_schedule": "cosine",
        "train.steps": "4000",
        "schedule.T": "100",
        "schedule.beta_end": "0.04",
    },
    "fullscale": {
        "train.steps": "1000000",
        "train.batch": "8",
        "train.patch": "96",
        "train.lr": "1e-4",
        "schedule.T": "1000",
    },
}


def _coerce(default, raw):
    if not isinstance(raw, str):
        return raw
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.replace("[", "").replace("]", "").split(",") if v.strip())
    return raw


def _set(cfg: RunConfig, section: str, key: str, value) -> None:
    if not hasattr(cfg, section):
        raise KeyError(f"unknown config section [{section}]")
    sec = getattr(cfg, section)
    names = {f.name for f in dataclasses.fields(sec)}
    if key not in names:
        raise KeyError(f"unknown config key {section}.{key}")
    default = getattr(sec, key)
    if isinstance(value, list):
        value = tuple(value)
    setattr(sec, key, _coerce(default, value))


def _revalidate(cfg: RunConfig) -> None:
    cfg.model.__post_init__()
    if cfg.train.lr_schedule not in ("constant", "cosine"):
        raise ValueError(f"train.lr_schedule must be constant or cosine, got {cfg.train.lr_schedule!r}")
    if cfg.train.phase not in (1, 2):
        raise ValueError(f"train.phase must be 1 or 2, got {cfg.train.phase}")


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        _set(cfg, section, key, value)
    _revalidate(cfg)
    return cfg


def load_config(path=None, overrides: dict[str, str] | None = None, preset: str = "desk") -> RunConfig:
    if preset not in PRESETS:
        raise KeyError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = RunConfig()
    apply_overrides(cfg, PRESETS[preset])
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        parser.optionxform = str
        if not parser.read(path):
            raise FileNotFoundError(f"config file {path} not found")
        for section in parser.sections():
            for key, value in parser.items(section):
                _set(cfg, section, key, value)
    if overrides:
        apply_overrides(cfg, overrides)
    _revalidate(cfg)
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for section, values in cfg.to_dict().items():
        parser[section] = {
            k: ",".join(str(x) for x in v) if isinstance(v, list) else str(v) for k, v in values.items()
        }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)
