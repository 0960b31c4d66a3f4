"""Multi-seed training experiments: the standard-vs-augmented comparison and ablations.

Runs execute in worker threads, at most ``settings.max_concurrent_runs`` at
a time; results are collected in submission order.
"""

import asyncio
import enum
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from soliplex.safepolicy.config import RunConfig
from soliplex.safepolicy.config import Variant
from soliplex.safepolicy.config import settings
from soliplex.safepolicy.core import RngStream
from soliplex.safepolicy.csvlog import EpochLogRow
from soliplex.safepolicy.csvlog import write_grid
from soliplex.safepolicy.env import random_policy_baseline
from soliplex.safepolicy.schedule import build_schedule
from soliplex.safepolicy.train import Stream
from soliplex.safepolicy.train import TrainingRun
from soliplex.safepolicy.train import env_spec_for
from soliplex.safepolicy.train import evaluate_policy
from soliplex.safepolicy.train import run_training
from soliplex.safepolicy.verify import CheckReport

logger = logging.getLogger(__name__)

CONSECUTIVE_FEASIBLE = 5
TRAILING_FRACTION = 0.25
SEED_FRACTION = 0.8
END_STATE_COST_FACTOR = 1.1
BASELINE_SIGMAS = 3.0
BASELINE_EPISODES = 100


class AblationParameter(enum.StrEnum):
    N = "N"
    M = "M"
    RHO = "rho"


@dataclass(frozen=True)
class RunSummary:
    seed: int
    variant: Variant
    steps_to_feasible: float
    lambda_variance: float
    cost_overshoot: float
    final_return: float
    final_cost: float
    final_lambda: float


def steps_to_sustained_feasibility(
    rows: list[EpochLogRow], h: float, run: int = CONSECUTIVE_FEASIBLE, warmup_steps: int = 0
) -> float:
    """Env steps at the first eval opening a streak of *run* evals with episode cost <= h; inf if none.

    Evals logged at or before *warmup_steps* are ignored.
    """
    evals = [r for r in rows if not math.isnan(r.eval_episode_cost) and r.env_steps > warmup_steps]
    streak = 0
    for i, r in enumerate(evals):
        streak = streak + 1 if r.eval_episode_cost <= h else 0
        if streak == run:
            return float(evals[i - run + 1].env_steps)
    return math.inf


def _trailing(values: list[float]) -> list[float]:
    if not values:
        return []
    k = max(1, math.ceil(len(values) * TRAILING_FRACTION))
    return values[-k:]


def trailing_lambda_variance(rows: list[EpochLogRow]) -> float:
    tail = _trailing([r.lambda_ for r in rows])
    return float(np.var(tail)) if tail else math.nan


def trailing_overshoot(rows: list[EpochLogRow], h: float) -> float:
    tail = _trailing([r.eval_episode_cost for r in rows if not math.isnan(r.eval_episode_cost)])
    return float(np.mean([max(0.0, c - h) for c in tail])) if tail else math.nan


def _train_and_summarize(run_cfg: RunConfig, out_dir: Path) -> RunSummary:
    run: TrainingRun = run_training(run_cfg, out_dir)
    cfg = run_cfg.train
    spec = env_spec_for(run_cfg)
    sch = build_schedule(cfg.K, cfg.sigma_min, cfg.sigma_max)
    final = evaluate_policy(run.agent, spec, sch, run_cfg.eval_episodes, RngStream(cfg.seed, Stream.FINAL_EVAL))
    return RunSummary(
        seed=cfg.seed,
        variant=run_cfg.variant,
        steps_to_feasible=steps_to_sustained_feasibility(run.rows, spec.h, warmup_steps=cfg.warmup_steps),
        lambda_variance=trailing_lambda_variance(run.rows),
        cost_overshoot=trailing_overshoot(run.rows, spec.h),
        final_return=final.mean_return,
        final_cost=final.mean_cost,
        final_lambda=run.agent.dual.lambda_,
    )


async def _bounded(semaphore: asyncio.Semaphore, run_cfg: RunConfig, out_dir: Path) -> RunSummary:
    async with semaphore:
        logger.info("starting %s seed %d", run_cfg.variant, run_cfg.train.seed, extra={"out_dir": str(out_dir)})
        return await asyncio.to_thread(_train_and_summarize, run_cfg, out_dir)


async def run_many(jobs: list[tuple[RunConfig, Path]]) -> list[RunSummary]:
    semaphore = asyncio.Semaphore(settings.max_concurrent_runs)
    return await asyncio.gather(*(_bounded(semaphore, cfg, out) for cfg, out in jobs))


def _with(run_cfg: RunConfig, seed: int, variant: Variant | None = None, **train_updates) -> RunConfig:
    train = run_cfg.train.model_copy(update={"seed": seed, **train_updates})
    return run_cfg.model_copy(update={"train": train, "variant": variant or run_cfg.variant})


async def ab_stability_experiment(
    run_cfg: RunConfig,
    seeds: list[int],
    out_dir: str | Path,
    variants: tuple[Variant, Variant] = (Variant.STANDARD, Variant.AUGMENTED),
) -> CheckReport:
    """Train both variants on every seed and compare how they reach and hold feasibility.

    Passes when, on at least 80% of the seeds each, the second variant
    reaches sustained feasibility (finite, and no later than the first), has
    strictly lower trailing multiplier variance, and ends in a safe state:
    final cost within 1.1 h and return 3 sd above the random-policy mean.
    """
    out = Path(out_dir)
    first, second = variants
    jobs = [(_with(run_cfg, seed, v), out / "runs" / f"{v}_seed{seed}") for seed in seeds for v in (first, second)]
    summaries = await run_many(jobs)
    pairs = [(summaries[2 * i], summaries[2 * i + 1]) for i in range(len(seeds))]

    spec = env_spec_for(run_cfg)
    base_mean, base_sd, base_cost = random_policy_baseline(
        spec, BASELINE_EPISODES, RngStream(run_cfg.train.seed, Stream.BASELINE)
    )
    faster = sum(math.isfinite(b.steps_to_feasible) and b.steps_to_feasible <= a.steps_to_feasible for a, b in pairs)
    steadier = sum(b.lambda_variance < a.lambda_variance for a, b in pairs)
    safe_end = sum(
        b.final_cost <= END_STATE_COST_FACTOR * spec.h and b.final_return >= base_mean + BASELINE_SIGMAS * base_sd
        for _, b in pairs
    )
    needed = math.ceil(SEED_FRACTION * len(seeds))

    artifact = write_grid(
        out / "ab_stability.csv",
        [
            "seed",
            "variant",
            "steps_to_feasible",
            "lambda_variance",
            "cost_overshoot",
            "final_return",
            "final_cost",
            "final_lambda",
        ],
        [
            (
                s.seed,
                str(s.variant),
                s.steps_to_feasible,
                s.lambda_variance,
                s.cost_overshoot,
                s.final_return,
                s.final_cost,
                s.final_lambda,
            )
            for s in summaries
        ],
    )
    return CheckReport(
        name="ab_stability",
        passed=faster >= needed and steadier >= needed and safe_end >= needed,
        metrics=[
            ("seeds", float(len(seeds))),
            ("seeds_required", float(needed)),
            ("seeds_feasible_no_later", float(faster)),
            ("seeds_lower_lambda_variance", float(steadier)),
            ("seeds_safe_end_state", float(safe_end)),
            ("random_policy_return_mean", base_mean),
            ("random_policy_return_sd", base_sd),
            ("random_policy_episode_cost", base_cost),
        ],
        artifact_path=str(artifact),
    )


async def ablation_sweep(
    run_cfg: RunConfig,
    seeds: list[int],
    parameter: AblationParameter,
    values: list[float],
    out_dir: str | Path,
) -> CheckReport:
    """Final eval return and cost per value of *parameter*; passes when every run ends finite."""
    parameter = AblationParameter(parameter)
    field = str(parameter)
    cast = float if parameter == AblationParameter.RHO else int
    out = Path(out_dir)
    jobs = [
        (_with(run_cfg, seed, **{field: cast(v)}), out / "runs" / f"{field}_{v}_seed{seed}")
        for v in values
        for seed in seeds
    ]
    summaries = await run_many(jobs)
    rows = []
    for (cfg, _), s in zip(jobs, summaries, strict=True):
        rows.append((getattr(cfg.train, field), s.seed, s.final_return, s.final_cost, s.final_lambda))
    finite = all(np.isfinite(r[2:]).all() for r in rows)
    artifact = write_grid(out / f"ablation_{field}.csv", [field, "seed", "final_return", "final_cost", "final_lambda"], rows)
    metrics = []
    for v in values:
        matching = [r for r in rows if r[0] == cast(v)]
        metrics.append((f"{field}={v}:return", float(np.mean([r[2] for r in matching]))))
        metrics.append((f"{field}={v}:cost", float(np.mean([r[3] for r in matching]))))
    return CheckReport(name=f"ablation_{field}", passed=finite, metrics=metrics, artifact_path=str(artifact))
