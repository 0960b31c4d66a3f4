"""Shared pytest fixtures for the reproduction runs.

These tests train full-size agents and take minutes to hours; they are not
collected by default (see ``testpaths``). Run them with
``pytest tests/functional``.
"""

import pytest

from soliplex.safepolicy.config import RunConfig


@pytest.fixture
def reproduction_cfg(tmp_path):
    """Published hyperparameters on point_hazard, 2e5 env steps."""
    return RunConfig.model_validate({"env": {"name": "point_hazard"}, "output_dir": str(tmp_path / "run")})


@pytest.fixture
def determinism_cfg(tmp_path):
    """100 epochs with the published architecture."""
    return RunConfig.model_validate(
        {
            "train": {"total_env_steps": 10_000, "warmup_steps": 1_000},
            "eval_every": 10,
            "eval_episodes": 2,
            "checkpoint_every": 25,
        }
    )
