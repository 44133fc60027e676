"""Shared fixtures: a 16x16 grid, narrow networks and batches of 8."""

import json

import numpy as np
import pytest

from infogate.gating.gates import GateConfig, LambdaSchedule
from infogate.nets.networks import NetConfig
from infogate.trainer.loop import TrainConfig
from infogate.trainer.probes import ProbeConfig
from infogate.worldgen.dataset import generate_dataset
from infogate.worldgen.env import EnvConfig

TINY_CONFIG = {
    "env": {"height": 16, "width": 16, "episode_length": 12},
    "data": {"episodes": 3, "eval_episodes": 2, "horizon_cap": 3},
    "nets": {"obs_shape": [3, 16, 16], "mask_channels": [4, 8], "bottleneck": 16,
             "encoder_channels": [4, 8, 8], "d_z": 8, "hidden": 16, "gn_groups": 2},
    "gate": {"warmup": 2},
    "train": {"batch_size": 8, "steps": 5, "eval_interval": 2, "log_interval": 1, "progress": False},
    "probe": {"steps": 20, "batch_size": 16, "hidden": 16},
    "sweep": {"lambdas": [0.01, 1.0], "seeds": [0]},
}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow experiment tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def env_cfg():
    return EnvConfig(height=16, width=16, episode_length=12)


@pytest.fixture
def net_cfg():
    return NetConfig(obs_shape=(3, 16, 16), mask_channels=(4, 8), bottleneck=16, encoder_channels=(4, 8, 8),
                     d_z=8, hidden=16, gn_groups=2)


@pytest.fixture
def gate_cfg():
    return GateConfig(warmup=2, schedule=LambdaSchedule(start=0.1, end=0.1))


@pytest.fixture
def train_cfg():
    return TrainConfig(batch_size=8, steps=5, eval_interval=2, log_interval=1, progress=False)


@pytest.fixture
def probe_cfg():
    return ProbeConfig(steps=20, batch_size=16, hidden=16)


@pytest.fixture
def dataset(env_cfg):
    return generate_dataset(env_cfg, episodes=3, horizon_cap=3, seed=0)


@pytest.fixture
def eval_dataset(env_cfg):
    return generate_dataset(env_cfg, episodes=2, horizon_cap=3, seed=101, eval_mode=True)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY_CONFIG), encoding="utf-8")
    return path


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    """Run from an empty directory with no INFOGATE_* variables set."""
    for name in ("INFOGATE_SEED", "INFOGATE_OUTDIR", "INFOGATE_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path
