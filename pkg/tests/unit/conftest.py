"""Shared pytest fixtures for unit tests."""

import pytest

from soliplex.safepolicy.config import RunConfig
from soliplex.safepolicy.config import TrainConfig
from soliplex.safepolicy.config import Variant
from soliplex.safepolicy.core import RngStream
from soliplex.safepolicy.env import make_env_spec
from soliplex.safepolicy.net import counters
from soliplex.safepolicy.schedule import build_schedule
from soliplex.safepolicy.train import init_agent

SMALL_TRAIN = {
    "batch_size": 8,
    "warmup_steps": 20,
    "steps_per_epoch": 10,
    "train_repeat": 2,
    "K": 3,
    "N": 4,
    "M": 2,
    "embed_dim": 4,
    "score_hidden": [16, 16],
    "critic_hidden": [16, 16],
    "cost_hidden": [16, 16],
    "buffer_capacity": 1000,
    "total_env_steps": 60,
}


@pytest.fixture
def rng():
    return RngStream(1234, 0)


@pytest.fixture
def small_cfg():
    return TrainConfig.model_validate(SMALL_TRAIN)


@pytest.fixture
def small_run_cfg(tmp_path):
    return RunConfig.model_validate(
        {
            "train": SMALL_TRAIN,
            "env": {"name": "point_hazard", "horizon": 25},
            "eval_every": 2,
            "eval_episodes": 2,
            "checkpoint_every": 3,
            "output_dir": str(tmp_path / "run"),
        }
    )


@pytest.fixture
def point_spec():
    return make_env_spec("point_hazard")


@pytest.fixture
def small_agent(small_cfg, point_spec):
    return init_agent(small_cfg, point_spec, Variant.AUGMENTED)


@pytest.fixture
def small_schedule(small_cfg):
    return build_schedule(small_cfg.K, small_cfg.sigma_min, small_cfg.sigma_max)


@pytest.fixture
def fresh_counters():
    counters.clear()
    yield counters
    counters.clear()
