import math

import numpy as np
import pytest

from kandiff.checkpoint import CheckpointError, load_model, read_checkpoint
from kandiff.config import load_config
from kandiff.tensor import Tensor
from kandiff.train import learning_rate, train

FAST = {"train.batch": "2", "train.patch": "16", "train.steps": "10", "io.log_interval": "5",
        "io.checkpoint_interval": "5", "schedule.T": "20"}


def cfg_for(root, **extra):
    return load_config(preset="tiny", overrides={**FAST, "data.root": str(root), **extra})


def test_ten_steps_give_loadable_finite_checkpoint(toy_data, tmp_path):
    res = train(cfg_for(toy_data), out_dir=tmp_path / "run")
    assert res.step == 10 and res.checkpoint.exists()
    for name in ("phase1_step5.ckpt", "phase1_step10.ckpt", "config_phase1.ini", "train_phase1.tsv",
                 "train_phase1.png"):
        assert (tmp_path / "run" / name).exists(), name
    net, header, _ = load_model(res.checkpoint)
    assert header["step"] == 10 and header["phase"] == 1
    eps, u = net(Tensor(np.zeros((1, 3, 16, 16), np.float32)), Tensor(np.zeros((1, 3, 16, 16), np.float32)), 0.5)
    assert np.all(np.isfinite(eps.data)) and np.all(np.isfinite(u.data))
    log = (tmp_path / "run" / "train_phase1.tsv").read_text().splitlines()
    assert log[0].split("\t")[:4] == ["step", "loss", "noise", "lr"]
    assert [int(line.split("\t")[0]) for line in log[1:]] == [1, 5, 10]


def test_resume_continues_step_counter(toy_data, tmp_path):
    first = train(cfg_for(toy_data, **{"train.steps": "4"}), out_dir=tmp_path / "a")
    res = train(cfg_for(toy_data, **{"train.steps": "7"}), resume=first.checkpoint, out_dir=tmp_path / "b")
    assert res.history[0]["step"] == 5 and res.step == 7
    header, _ = read_checkpoint(res.checkpoint)
    assert header["step"] == 7 and header["optim_step"] == 7


def test_identical_seeds_identical_losses(toy_data):
    a = train(cfg_for(toy_data)).history[-1]["loss"]
    b = train(cfg_for(toy_data)).history[-1]["loss"]
    c = train(cfg_for(toy_data, **{"train.seed": "1"})).history[-1]["loss"]
    assert a == b and a != c


def test_phase2_needs_phase1_checkpoint(toy_data, tmp_path):
    with pytest.raises(FileNotFoundError):
        train(cfg_for(toy_data, **{"train.phase": "2"}))
    p2 = train(cfg_for(toy_data, **{"train.steps": "2"}), out_dir=tmp_path / "p1")
    second = train(cfg_for(toy_data, **{"train.phase": "2", "train.steps": "2",
                                        "train.init_checkpoint": str(p2.checkpoint)}), out_dir=tmp_path / "p2")
    with pytest.raises(CheckpointError, match="not a phase-1"):
        train(cfg_for(toy_data, **{"train.phase": "2", "train.init_checkpoint": str(second.checkpoint)}))


def test_incompatible_checkpoint_fails_before_training(toy_data, tmp_path):
    p1 = train(cfg_for(toy_data, **{"train.steps": "1"}), out_dir=tmp_path / "p1")
    cfg = cfg_for(toy_data, **{"train.phase": "2", "train.init_checkpoint": str(p1.checkpoint),
                               "model.base_channels": "16"})
    with pytest.raises(CheckpointError, match="in_conv.weight"):
        train(cfg, out_dir=tmp_path / "p2")
    assert not (tmp_path / "p2" / "phase2_last.ckpt").exists()


def test_phase2_keeps_uncertainty_head_bit_identical(toy_data, tmp_path):
    p1 = train(cfg_for(toy_data, **{"train.steps": "3"}), out_dir=tmp_path / "p1")
    p2 = train(cfg_for(toy_data, **{"train.phase": "2", "train.steps": "3",
                                    "train.init_checkpoint": str(p1.checkpoint)}), out_dir=tmp_path / "p2")
    before, _, _ = load_model(p1.checkpoint)
    after, _, _ = load_model(p2.checkpoint)
    for (name, a), (_, b) in zip(before.named_parameters(), after.named_parameters()):
        if name.startswith("uncertainty."):
            assert a.data.tobytes() == b.data.tobytes(), name
    changed = [n for (n, a), (_, b) in zip(before.named_parameters(), after.named_parameters())
               if not np.array_equal(a.data, b.data)]
    assert changed and "freq_to_noise" in p2.history[0]


def test_missing_dataset_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        train(cfg_for(tmp_path / "nowhere"))


def test_cosine_learning_rate_endpoints():
    cfg = load_config(overrides={"train.lr": "1e-3", "train.lr_min": "1e-5", "train.lr_schedule": "cosine",
                                 "train.steps": "101"})
    assert learning_rate(cfg, 1) == 1e-3
    assert math.isclose(learning_rate(cfg, 101), 1e-5)
    assert math.isclose(learning_rate(cfg, 51), (1e-3 + 1e-5) / 2)
    cfg.train.lr_schedule = "constant"
    assert learning_rate(cfg, 77) == 1e-3


def test_eval_fn_can_stop_early(toy_data):
    res = train(cfg_for(toy_data, **{"io.log_interval": "2"}),
                eval_fn=lambda net, step: {"stop": step >= 4})
    assert res.step == 4 and res.history[-1]["stop"]
