"""Energy landscapes over a 2-D action slice at a fixed state."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from soliplex.safepolicy.config import EnvName
from soliplex.safepolicy.config import RunConfig
from soliplex.safepolicy.config import Variant
from soliplex.safepolicy.core import ReplayBuffer
from soliplex.safepolicy.csvlog import write_grid
from soliplex.safepolicy.energy import DualState
from soliplex.safepolicy.energy import energy_functions
from soliplex.safepolicy.schedule import build_schedule
from soliplex.safepolicy.train import Critics
from soliplex.safepolicy.train import EnvSession
from soliplex.safepolicy.train import TrainStreams
from soliplex.safepolicy.train import env_spec_for
from soliplex.safepolicy.train import init_agent
from soliplex.safepolicy.train import save_agent
from soliplex.safepolicy.train import train_epoch
from soliplex.safepolicy.verify import CheckReport
from soliplex.safepolicy.verify import GridSpec
from soliplex.safepolicy.verify import VerifyError

logger = logging.getLogger(__name__)

STANDARD_FILE = "landscape_standard.csv"
AUGMENTED_FILE = "landscape_augmented.csv"
DIFFERENCE_FILE = "landscape_difference.csv"
PROTOCOL_EPISODES = 100
# on the start-goal line short of the hazard, heading for the goal and at rest
PROTOCOL_STATES = {
    EnvName.DIFF_DRIVE: (-0.6, 0.0, 0.0),
    EnvName.POINT_HAZARD: (-0.6, 0.0, 0.0, 0.0),
}


@dataclass(frozen=True)
class LandscapeGrids:
    points: np.ndarray
    standard: np.ndarray
    augmented: np.ndarray
    feasible: np.ndarray


def landscape_grids(critics: Critics, d_std: DualState, d_aug: DualState, grid: GridSpec) -> LandscapeGrids:
    if not grid.state:
        raise VerifyError("the landscape grid needs a fixed state")
    points = grid.points()
    e = critics.energy_eval(np.asarray(grid.state, dtype=float), points, with_grad=False)
    value_std, _ = energy_functions(Variant.STANDARD)
    value_aug, _ = energy_functions(Variant.AUGMENTED)
    return LandscapeGrids(
        points=points,
        standard=value_std(e, d_std),
        augmented=value_aug(e, d_aug),
        feasible=e.qc <= d_aug.h,
    )


def export_landscape(
    critics: Critics,
    d_std: DualState,
    d_aug: DualState,
    grid: GridSpec,
    out_dir: str | Path,
) -> CheckReport:
    """Write both Lagrangian grids and their difference with the feasible-set mask.

    Passes once all three files exist.
    """
    out = Path(out_dir)
    grids = landscape_grids(critics, d_std, d_aug, grid)
    header = ["a1", "a2", "value", "feasible"]
    std_path = write_grid(
        out / STANDARD_FILE, header, np.column_stack([grids.points, grids.standard, grids.feasible.astype(int)])
    )
    aug_path = write_grid(
        out / AUGMENTED_FILE, header, np.column_stack([grids.points, grids.augmented, grids.feasible.astype(int)])
    )
    diff_path = write_grid(
        out / DIFFERENCE_FILE,
        header,
        np.column_stack([grids.points, grids.augmented - grids.standard, grids.feasible.astype(int)]),
    )
    finite = bool(np.all(np.isfinite(grids.standard)) and np.all(np.isfinite(grids.augmented)))
    return CheckReport(
        name="landscape",
        passed=all(p.is_file() for p in (std_path, aug_path, diff_path)),
        metrics=[
            ("points", float(len(grids.points))),
            ("feasible_fraction", float(grids.feasible.mean())),
            ("all_finite", float(finite)),
            ("lambda_standard", d_std.lambda_),
            ("lambda_augmented", d_aug.lambda_),
        ],
        artifact_path=str(std_path),
        extra_artifacts=[str(aug_path), str(diff_path)],
    )


def landscape_protocol(
    out_dir: str | Path,
    run_cfg: RunConfig | None = None,
    episodes: int = PROTOCOL_EPISODES,
    state: tuple[float, ...] | None = None,
    resolution: int = 101,
) -> CheckReport:
    """Train *run_cfg* (default: augmented on diff_drive) for *episodes* episodes, then export its landscape.

    Both grids use the trained critics; the standard grid uses the trained
    multiplier with the standard Lagrangian. *state* defaults to a point on
    the start-goal line of the configured env.

    Raises:
        VerifyError: If *state* does not match the env's state dimension.
    """
    if run_cfg is None:
        run_cfg = RunConfig.model_validate({"env": {"name": EnvName.DIFF_DRIVE}, "variant": Variant.AUGMENTED})
    cfg = run_cfg.train
    spec = env_spec_for(run_cfg)
    state = tuple(state) if state is not None else PROTOCOL_STATES[spec.name]
    if len(state) != spec.d_s:
        raise VerifyError(f"{spec.name} states have {spec.d_s} values, got {len(state)}")
    sch = build_schedule(cfg.K, cfg.sigma_min, cfg.sigma_max)
    agent = init_agent(cfg, spec, run_cfg.variant)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    streams = TrainStreams.from_seed(cfg.seed)
    session = EnvSession(spec)
    epoch = 0
    while agent.episodes < episodes:
        epoch += 1
        train_epoch(agent, session, buffer, sch, streams, epoch)
    logger.info("landscape protocol trained %d episodes in %d env steps", agent.episodes, agent.env_steps)
    save_agent(Path(out_dir) / "landscape_agent", agent, run_cfg, buffer)
    grid = GridSpec(resolution=resolution, state=state)
    return export_landscape(agent, agent.dual, agent.dual, grid, out_dir)
