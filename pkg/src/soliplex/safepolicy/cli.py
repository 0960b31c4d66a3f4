import json
import logging

import typer

from soliplex.safepolicy import SafePolicyError
from soliplex.safepolicy.config import Variant
from soliplex.safepolicy.config import configure_logging
from soliplex.safepolicy.config import load_run_config
from soliplex.safepolicy.core import RngStream
from soliplex.safepolicy.schedule import build_schedule
from soliplex.safepolicy.train import Stream
from soliplex.safepolicy.train import evaluate_policy
from soliplex.safepolicy.train import load_agent
from soliplex.safepolicy.train import run_training
from soliplex.safepolicy.verify import GridSpec
from soliplex.safepolicy.verify import write_report
from soliplex.safepolicy.verify.landscape import export_landscape
from soliplex.safepolicy.verify.suites import Suite
from soliplex.safepolicy.verify.suites import run_suite

logger = logging.getLogger(__name__)


def init():
    configure_logging()


cli = typer.Typer(no_args_is_help=True, callback=init)


def _fail(e: Exception):
    print(f"Error: {e}")
    raise SystemExit(1) from None


def parse_state(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise typer.BadParameter(f"expected comma-separated numbers, got {text!r}") from None


@cli.command("train")
def train(
    config: str = typer.Option(..., "--config", "-c", help="Path to a YAML run config"),
    seed: int | None = typer.Option(None, "--seed", help="Override train.seed (unsigned 64-bit)"),
    variant: Variant | None = typer.Option(None, "--variant", help="Guidance energy: standard or augmented"),
    out: str | None = typer.Option(None, "--out", help="Output directory (default: config output_dir or OUTPUT_DIR)"),
):
    """Train one agent, writing the epoch log and checkpoints."""
    try:
        run_cfg = load_run_config(config)
        if seed is not None:
            if not 0 <= seed < 2**64:
                raise SafePolicyError(f"--seed must be an unsigned 64-bit integer, got {seed}")
            run_cfg = run_cfg.model_copy(update={"train": run_cfg.train.model_copy(update={"seed": seed})})
        run = run_training(run_cfg, out, variant)
    except (FileNotFoundError, SafePolicyError) as e:
        _fail(e)
    last = run.rows[-1] if run.rows else None
    print(f"Wrote {len(run.rows)} epochs to {run.log_path}")
    print(f"Checkpoint: {run.checkpoint}")
    if last is not None:
        print(f"Final lambda: {last.lambda_:.6g}")


@cli.command("eval")
def evaluate(
    checkpoint: str = typer.Option(..., "--checkpoint", help="Checkpoint path (with or without .json)"),
    episodes: int = typer.Option(10, "--episodes", min=1, help="Number of evaluation episodes"),
    seed: int = typer.Option(0, "--seed", help="Seed of the evaluation stream"),
    do_json: bool = typer.Option(False, "--json", help="Output results as JSON"),
):
    """Report mean and standard deviation of return and episode cost."""
    try:
        loaded = load_agent(checkpoint)
    except (FileNotFoundError, SafePolicyError) as e:
        _fail(e)
    cfg = loaded.run_cfg.train
    sch = build_schedule(cfg.K, cfg.sigma_min, cfg.sigma_max)
    result = evaluate_policy(loaded.agent, loaded.spec, sch, episodes, RngStream(seed, Stream.EVAL))
    if do_json:
        print(json.dumps(result.__dict__, indent=2))
    else:
        print(f"return: {result.mean_return:.4f} ± {result.sd_return:.4f}")
        print(f"episode cost: {result.mean_cost:.4f} ± {result.sd_cost:.4f} (budget {loaded.spec.h:g})")


@cli.command("verify")
def verify(
    suite: Suite = typer.Option(Suite.ALL, "--suite", help="Check suite to run"),
    out: str | None = typer.Option(None, "--out", help="Output directory (default: VERIFY_DIR)"),
    config: str | None = typer.Option(None, "--config", "-c", help="Run config for the training suites"),
):
    """Run a check suite; exits 1 if any check fails."""
    try:
        run_cfg = load_run_config(config) if config else None
        reports = run_suite(suite, out, run_cfg)
    except (FileNotFoundError, SafePolicyError) as e:
        _fail(e)
    for report in reports:
        print(report.summary())
    if not all(r.passed for r in reports):
        raise SystemExit(1)


@cli.command("landscape")
def landscape(
    checkpoint: str = typer.Option(..., "--checkpoint", help="Checkpoint path (with or without .json)"),
    state: str = typer.Option(..., "--state", help='Fixed state, e.g. "x,y,theta"'),
    out: str = typer.Option(..., "--out", help="Output directory"),
    resolution: int = typer.Option(101, "--resolution", min=3, help="Grid points per action axis"),
):
    """Export both Lagrangian landscapes of a trained agent over the action square."""
    values = parse_state(state)
    try:
        loaded = load_agent(checkpoint)
        if len(values) != loaded.spec.d_s:
            raise SafePolicyError(f"--state needs {loaded.spec.d_s} values for {loaded.spec.name}, got {len(values)}")
        dual = loaded.agent.dual
        report = export_landscape(loaded.agent, dual, dual, GridSpec(resolution=resolution, state=values), out)
    except (FileNotFoundError, SafePolicyError) as e:
        _fail(e)
    write_report(report, out)
    print(report.summary())
    for path in [report.artifact_path, *report.extra_artifacts]:
        print(f"  {path}")
