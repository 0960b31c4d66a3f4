"""Tests for the ``safepolicy`` command line."""

import json
import textwrap
from unittest.mock import patch

import pytest
import yaml
from typer.testing import CliRunner

from soliplex.safepolicy.cli import cli
from soliplex.safepolicy.cli import parse_state
from soliplex.safepolicy.config import dump_run_config
from soliplex.safepolicy.train import run_training
from soliplex.safepolicy.verify import CheckReport

runner = CliRunner()


@pytest.fixture
def config_file(small_run_cfg, tmp_path):
    path = tmp_path / "small.yml"
    path.write_text(dump_run_config(small_run_cfg))
    return path


@pytest.fixture
def checkpoint(small_run_cfg, tmp_path):
    return run_training(small_run_cfg, tmp_path / "trained").checkpoint


class TestTrain:
    def test_writes_log_and_checkpoint(self, config_file, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(cli, ["train", "--config", str(config_file), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "Wrote 6 epochs" in result.output
        assert "Final lambda:" in result.output
        assert (out / "epochs.csv").is_file()
        assert (out / "final.json").is_file()

    def test_seed_and_variant_overrides(self, config_file, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(cli, ["train", "-c", str(config_file), "--seed", "7", "--variant", "standard", "--out", str(out)])
        assert result.exit_code == 0, result.output
        written = yaml.safe_load((out / "config.yml").read_text())
        assert written["train"]["seed"] == 7
        assert written["variant"] == "standard"

    def test_zero_budget(self, small_run_cfg, tmp_path):
        cfg = small_run_cfg.model_copy(update={"train": small_run_cfg.train.model_copy(update={"total_env_steps": 0})})
        path = tmp_path / "zero.yml"
        path.write_text(dump_run_config(cfg))
        result = runner.invoke(cli, ["train", "-c", str(path), "--out", str(tmp_path / "out")])
        assert result.exit_code == 0, result.output
        assert "Wrote 0 epochs" in result.output
        assert "Final lambda" not in result.output

    def test_missing_config(self, tmp_path):
        result = runner.invoke(cli, ["train", "-c", str(tmp_path / "nope.yml")])
        assert result.exit_code == 1
        assert "Error: Config file not found" in result.output

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.yml"
        path.write_text(
            textwrap.dedent("""\
            train:
              batch_size: 8
              learning_rate: 0.1
            """)
        )
        result = runner.invoke(cli, ["train", "-c", str(path)])
        assert result.exit_code == 1
        assert "Error: train.learning_rate" in result.output

    def test_invalid_value(self, tmp_path):
        path = tmp_path / "bad.yml"
        path.write_text("train:\n  K: 0\n")
        result = runner.invoke(cli, ["train", "-c", str(path)])
        assert result.exit_code == 1
        assert "Error: train.K" in result.output

    def test_seed_out_of_range(self, config_file):
        result = runner.invoke(cli, ["train", "-c", str(config_file), "--seed", str(2**64)])
        assert result.exit_code == 1
        assert "unsigned 64-bit" in result.output

    def test_unknown_variant(self, config_file):
        result = runner.invoke(cli, ["train", "-c", str(config_file), "--variant", "fancy"])
        assert result.exit_code == 2


def test_unknown_subcommand():
    result = runner.invoke(cli, ["fly"])
    assert result.exit_code == 2


class TestEval:
    def test_reports_mean_and_sd(self, checkpoint):
        result = runner.invoke(cli, ["eval", "--checkpoint", str(checkpoint), "--episodes", "2"])
        assert result.exit_code == 0, result.output
        assert "return:" in result.output
        assert "(budget 25)" in result.output

    def test_json_output(self, checkpoint):
        result = runner.invoke(cli, ["eval", "--checkpoint", str(checkpoint), "--episodes", "2", "--json"])
        assert result.exit_code == 0, result.output
        data = json.loads(result.stdout)
        assert data["episodes"] == 2
        assert data["sd_return"] >= 0.0

    def test_checkpoint_without_suffix(self, checkpoint):
        result = runner.invoke(cli, ["eval", "--checkpoint", str(checkpoint.with_suffix("")), "--episodes", "1"])
        assert result.exit_code == 0, result.output

    def test_missing_checkpoint(self, tmp_path):
        result = runner.invoke(cli, ["eval", "--checkpoint", str(tmp_path / "none")])
        assert result.exit_code == 1
        assert "Error: Checkpoint not found" in result.output

    def test_episodes_must_be_positive(self, checkpoint):
        result = runner.invoke(cli, ["eval", "--checkpoint", str(checkpoint), "--episodes", "0"])
        assert result.exit_code == 2


class TestVerify:
    def test_boltzmann_suite(self, tmp_path):
        result = runner.invoke(cli, ["verify", "--suite", "boltzmann", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "PASS boltzmann_feasible_zero_multiplier" in result.output
        assert "PASS (control) boltzmann_violated_slackness_control" in result.output

    def test_mc_suite(self, tmp_path):
        result = runner.invoke(cli, ["verify", "--suite", "mc", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "mc_convergence.json").read_text())
        slope = dict(report["metrics"])["slope"]
        assert -0.65 <= slope <= -0.35

    def test_failed_check_exits_nonzero(self, tmp_path):
        failed = CheckReport(name="broken", passed=False, artifact_path="x.csv")
        with patch("soliplex.safepolicy.cli.run_suite", return_value=[failed]):
            result = runner.invoke(cli, ["verify", "--suite", "hessian", "--out", str(tmp_path)])
        assert result.exit_code == 1
        assert "FAIL broken" in result.output

    def test_unknown_suite(self):
        result = runner.invoke(cli, ["verify", "--suite", "everything"])
        assert result.exit_code == 2

    def test_missing_run_config(self, tmp_path):
        result = runner.invoke(cli, ["verify", "--suite", "ab", "--config", str(tmp_path / "nope.yml")])
        assert result.exit_code == 1
        assert "Error:" in result.output


class TestLandscape:
    def test_exports_grids(self, checkpoint, tmp_path):
        out = tmp_path / "land"
        result = runner.invoke(
            cli,
            ["landscape", "--checkpoint", str(checkpoint), "--state=-0.6,0,0,0", "--out", str(out), "--resolution", "5"],
        )
        assert result.exit_code == 0, result.output
        assert (out / "landscape_standard.csv").is_file()
        assert (out / "landscape_augmented.csv").is_file()
        assert (out / "landscape.json").is_file()

    def test_state_length_checked(self, checkpoint, tmp_path):
        result = runner.invoke(cli, ["landscape", "--checkpoint", str(checkpoint), "--state", "0,0,0", "--out", str(tmp_path)])
        assert result.exit_code == 1
        assert "needs 4 values" in result.output

    def test_unparseable_state(self, checkpoint, tmp_path):
        result = runner.invoke(cli, ["landscape", "--checkpoint", str(checkpoint), "--state", "x,y", "--out", str(tmp_path)])
        assert result.exit_code == 2


def test_parse_state():
    assert parse_state("1, -0.5,2") == (1.0, -0.5, 2.0)
