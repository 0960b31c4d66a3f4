import asyncio
import enum
import logging
from pathlib import Path

from soliplex.safepolicy.config import RunConfig
from soliplex.safepolicy.config import settings
from soliplex.safepolicy.core import RngStream
from soliplex.safepolicy.energy import DualState
from soliplex.safepolicy.verify import CheckReport
from soliplex.safepolicy.verify import GridSpec
from soliplex.safepolicy.verify import write_report
from soliplex.safepolicy.verify.analytic import random_test_functions
from soliplex.safepolicy.verify.checks import boltzmann_cases
from soliplex.safepolicy.verify.checks import check_boltzmann_invariance
from soliplex.safepolicy.verify.checks import check_hessian_gap
from soliplex.safepolicy.verify.checks import check_mc_convergence
from soliplex.safepolicy.verify.experiments import AblationParameter
from soliplex.safepolicy.verify.experiments import ab_stability_experiment
from soliplex.safepolicy.verify.experiments import ablation_sweep
from soliplex.safepolicy.verify.landscape import landscape_protocol

logger = logging.getLogger(__name__)

SUITE_SEED = 0
AB_SEEDS = [0, 1, 2, 3, 4]
MC_SAMPLE_COUNTS = [4, 16, 64, 256, 1024]
MC_REPEATS = 200
ABLATION_VALUES = {
    AblationParameter.N: [1, 6, 16],
    AblationParameter.M: [1, 6, 10],
    AblationParameter.RHO: [0.1, 1.0, 10.0],
}


class Suite(enum.StrEnum):
    ALL = "all"
    HESSIAN = "hessian"
    BOLTZMANN = "boltzmann"
    MC = "mc"
    AB = "ab"
    ABLATION = "ablation"
    LANDSCAPE = "landscape"


def hessian_suite(out_dir: Path) -> list[CheckReport]:
    fns = random_test_functions(RngStream(SUITE_SEED, 1), trials=3)
    d = DualState(lambda_=0.5, rho=1.0, h=0.0, eta_lambda=1.0)
    return [check_hessian_gap(fns, d, GridSpec(), out_dir)]


def boltzmann_suite(out_dir: Path) -> list[CheckReport]:
    return [
        check_boltzmann_invariance(fn, lam, GridSpec(), beta=0.5, out_dir=out_dir, label=label)
        for label, fn, lam in boltzmann_cases()
    ]


def mc_suite(out_dir: Path) -> list[CheckReport]:
    rng = RngStream(SUITE_SEED, 2)
    return [
        check_mc_convergence(1.0, 1.0, 0.5, MC_SAMPLE_COUNTS, MC_REPEATS, rng, out_dir),
        check_mc_convergence(
            1.0,
            1.0,
            0.5,
            MC_SAMPLE_COUNTS,
            MC_REPEATS,
            rng,
            out_dir,
            mu=(0.0, 0.0),
            a_tau=(0.3, -0.2),
            name="mc_convergence_2d",
        ),
    ]


def ab_suite(out_dir: Path, run_cfg: RunConfig) -> list[CheckReport]:
    return [asyncio.run(ab_stability_experiment(run_cfg, AB_SEEDS, out_dir / "ab"))]


def ablation_suite(out_dir: Path, run_cfg: RunConfig) -> list[CheckReport]:
    return [
        asyncio.run(ablation_sweep(run_cfg, [SUITE_SEED], parameter, values, out_dir / "ablation"))
        for parameter, values in ABLATION_VALUES.items()
    ]


def run_suite(name: str, out_dir: str | Path | None = None, run_cfg: RunConfig | None = None) -> list[CheckReport]:
    """Run the named suite, writing data files and JSON reports under *out_dir*.

    *run_cfg* configures the training suites; without one, ab and ablation
    train the default point_hazard config and landscape trains on diff_drive.
    """
    suite = Suite(name)
    out = Path(out_dir or settings.verify_dir)
    out.mkdir(parents=True, exist_ok=True)
    if suite == Suite.ALL:
        reports = hessian_suite(out) + boltzmann_suite(out) + mc_suite(out)
    elif suite == Suite.HESSIAN:
        reports = hessian_suite(out)
    elif suite == Suite.BOLTZMANN:
        reports = boltzmann_suite(out)
    elif suite == Suite.MC:
        reports = mc_suite(out)
    elif suite == Suite.AB:
        reports = ab_suite(out, run_cfg or RunConfig())
    elif suite == Suite.ABLATION:
        reports = ablation_suite(out, run_cfg or RunConfig())
    else:
        reports = [landscape_protocol(out / "landscape", run_cfg)]
    for report in reports:
        path = write_report(report, out)
        logger.info(report.summary(), extra={"report": str(path)})
    return reports
