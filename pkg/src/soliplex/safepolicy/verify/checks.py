"""Deterministic property checks on closed-form energies.

Pass thresholds:

* Hessian gap: on every point where the hinge is active across the whole
  finite-difference stencil, ``|dH - rho g g^T|_2 < 1e-6`` for affine cost
  critics; on affine inactive points ``max |dH| < 1e-6``; for quadratic
  cost critics the fitted eigenvalue-deficit slope
  ``C = max(-min_eig(dH), 0) / |Qc - h|`` (points with ``|Qc - h| > 1e-3``)
  stays within ``rho * |hess Qc|_2 + 1e-4``.
* Boltzmann invariance: max grid-density gap ``< 1e-9`` where
  complementary slackness holds; negative controls pass when the gap is at
  least ``1e-9``.
* Monte-Carlo convergence: fitted log-log slope of RMSE against N inside
  ``[-0.65, -0.35]``.
"""

import logging
from pathlib import Path

import numpy as np

from soliplex.safepolicy.core import RngStream
from soliplex.safepolicy.csvlog import write_grid
from soliplex.safepolicy.energy import DualState
from soliplex.safepolicy.energy import aug_lagrangian
from soliplex.safepolicy.energy import lagrangian
from soliplex.safepolicy.score import EnergyFn
from soliplex.safepolicy.score import gaussian_mollified_score
from soliplex.safepolicy.score import mc_score_targets_batch
from soliplex.safepolicy.verify import CheckReport
from soliplex.safepolicy.verify import GridSpec
from soliplex.safepolicy.verify import VerifyError
from soliplex.safepolicy.verify.analytic import AnalyticCritics
from soliplex.safepolicy.verify.analytic import CostShape

logger = logging.getLogger(__name__)

FD_STEP = 1e-4
HESSIAN_TOL = 1e-6
DEFICIT_TOL = 1e-4
MIN_RESIDUAL = 1e-3
DENSITY_TOL = 1e-9
SLACKNESS_TOL = 1e-12
SLOPE_RANGE = (-0.65, -0.35)


def _stencil(a: np.ndarray, i: int, j: int, step: float) -> list[np.ndarray]:
    ei = np.zeros(a.shape[1])
    ej = np.zeros(a.shape[1])
    ei[i] = step
    ej[j] = step
    return [a + ei + ej, a + ei - ej, a - ei + ej, a - ei - ej]


def fd_hessian(fun, a: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Hessians of a scalar field at each row of *a*."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    dim = a.shape[1]
    out = np.zeros((a.shape[0], dim, dim))
    for i in range(dim):
        for j in range(i, dim):
            pp, pm, mp, mm = (fun(x) for x in _stencil(a, i, j, step))
            out[:, i, j] = out[:, j, i] = (pp - pm - mp + mm) / (4.0 * step * step)
    return out


def _stencil_range(fun, a: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    values = [fun(a)]
    dim = a.shape[1]
    for i in range(dim):
        for j in range(i, dim):
            values.extend(fun(x) for x in _stencil(a, i, j, step))
    stacked = np.stack(values)
    return stacked.min(axis=0), stacked.max(axis=0)


def check_hessian_gap(
    test_fns: list[AnalyticCritics],
    d: DualState,
    grid: GridSpec,
    out_dir: str | Path,
    step: float = FD_STEP,
) -> CheckReport:
    """Compare finite-difference Hessians of the augmented and standard Lagrangians."""
    points = grid.points()
    affine_err = 0.0
    affine_min_eig = np.inf
    inactive_err = 0.0
    fitted_c = 0.0
    c_bound = 0.0
    active_total = 0
    inactive_total = 0
    rows = []
    for trial, fn in enumerate(test_fns):

        def delta(a, fn=fn):
            e = fn.energy_eval(None, a)
            return aug_lagrangian(e, d) - lagrangian(e, d)

        def hinge_arg(a, fn=fn):
            return d.lambda_ + d.rho * (fn.energy_eval(None, a).qc - d.h)

        e = fn.energy_eval(None, points)
        lo, hi = _stencil_range(hinge_arg, points, step)
        active = lo > 0
        inactive = hi < 0
        dh = fd_hessian(delta, points, step)
        expected = d.rho * np.einsum("pi,pj->pij", e.grad_qc, e.grad_qc)
        gap_err = np.linalg.norm(dh - expected, ord=2, axis=(1, 2))
        min_eig = np.linalg.eigvalsh(dh)[:, 0]
        residual = e.qc - d.h
        active_total += int(active.sum())

        if fn.shape == CostShape.AFFINE:
            if active.any():
                affine_err = max(affine_err, float(gap_err[active].max()))
                affine_min_eig = min(affine_min_eig, float(min_eig[active].min()))
            if inactive.any():
                inactive_total += int(inactive.sum())
                inactive_err = max(inactive_err, float(np.abs(dh[inactive]).max()))
        else:
            usable = active & (np.abs(residual) > MIN_RESIDUAL)
            if usable.any():
                ratio = np.maximum(-min_eig[usable], 0.0) / np.abs(residual[usable])
                fitted_c = max(fitted_c, float(ratio.max()))
            c_bound = max(c_bound, d.rho * fn.cost_hessian_norm)

        region = np.where(active, 1, np.where(inactive, -1, 0))
        for k in range(len(points)):
            rows.append(
                (trial, str(fn.shape), points[k, 0], points[k, 1], residual[k], region[k], gap_err[k], min_eig[k])
            )

    artifact = write_grid(
        Path(out_dir) / "hessian_gap.csv",
        ["trial", "shape", "a1", "a2", "residual", "region", "gap_error", "min_eig"],
        rows,
    )
    has_affine = any(fn.shape == CostShape.AFFINE for fn in test_fns)
    passed = (
        (not has_affine or np.isfinite(affine_min_eig))
        and affine_err < HESSIAN_TOL
        and inactive_err < HESSIAN_TOL
        and fitted_c <= c_bound + DEFICIT_TOL
    )
    return CheckReport(
        name="hessian_gap",
        passed=bool(passed),
        metrics=[
            ("affine_max_gap_error", affine_err),
            ("affine_min_eigenvalue", float(affine_min_eig) if np.isfinite(affine_min_eig) else float("nan")),
            ("inactive_max_abs", inactive_err),
            ("smooth_fitted_C", fitted_c),
            ("smooth_C_bound", c_bound),
            ("active_points", float(active_total)),
            ("inactive_points", float(inactive_total)),
        ],
        artifact_path=str(artifact),
    )


def _grid_density(energy: np.ndarray, beta: float) -> np.ndarray:
    logits = -energy / beta
    p = np.exp(logits - logits.max())
    return p / p.sum()


def check_boltzmann_invariance(
    fn: AnalyticCritics,
    lambda_star: float,
    grid: GridSpec,
    beta: float,
    out_dir: str | Path,
    rho: float = 1.0,
    h: float = 0.0,
    label: str = "",
) -> CheckReport:
    """Grid-normalized Boltzmann densities of both Lagrangians at a fixed multiplier."""
    points = grid.points()
    d = DualState(lambda_=lambda_star, rho=rho, h=h, eta_lambda=1.0)
    e = fn.energy_eval(None, points)
    p_std = _grid_density(lagrangian(e, d), beta)
    p_aug = _grid_density(aug_lagrangian(e, d), beta)
    gap = float(np.max(np.abs(p_std - p_aug)))
    if lambda_star == 0:
        applicable = bool(np.all(e.qc <= h))
    else:
        applicable = bool(np.all(np.abs(e.qc - h) <= SLACKNESS_TOL))
    passed = gap < DENSITY_TOL if applicable else gap >= DENSITY_TOL
    name = f"boltzmann_{label}" if label else "boltzmann"
    artifact = write_grid(
        Path(out_dir) / f"{name}.csv",
        ["a1", "a2", "density_standard", "density_augmented"],
        np.column_stack([points, p_std, p_aug]),
    )
    return CheckReport(
        name=name,
        passed=bool(passed),
        applicable=applicable,
        metrics=[("max_density_gap", gap), ("lambda", lambda_star), ("beta", beta)],
        artifact_path=str(artifact),
    )


def boltzmann_cases(h: float = 0.0) -> list[tuple[str, AnalyticCritics, float]]:
    """Two complementary-slackness configurations and one violated control."""
    tilted = AnalyticCritics(mu_r=(0.2, -0.1), g=(0.5, 0.3), b=h - 1.0)
    binding = AnalyticCritics(mu_r=(0.2, -0.1), g=(0.0, 0.0), b=h)
    return [
        ("feasible_zero_multiplier", tilted, 0.0),
        ("binding_constant_cost", binding, 0.7),
        ("violated_slackness_control", tilted, 0.7),
    ]


def gaussian_energy(beta: float, varsigma: float, mu) -> EnergyFn:
    """Energy whose Boltzmann distribution at temperature *beta* is ``N(mu, varsigma^2 I)``."""
    mu = np.asarray(mu, dtype=float)

    def value(a):
        diff = np.asarray(a) - mu
        return beta * np.sum(diff * diff, axis=-1) / (2.0 * varsigma**2)

    def grad(a):
        return beta * (np.asarray(a) - mu) / varsigma**2

    check_points = mu + np.outer([-1.0, 0.0, 0.5], np.ones(mu.size))
    return EnergyFn.oracle(value, grad, f"gaussian(varsigma={varsigma})", check_points)


def check_mc_convergence(
    beta: float,
    varsigma: float,
    sigma_tau: float,
    N_list: list[int],
    repeats: int,
    rng: RngStream,
    out_dir: str | Path,
    mu=(0.0,),
    a_tau=(0.3,),
    name: str = "mc_convergence",
) -> CheckReport:
    """Fit the log-log slope of Monte-Carlo score RMSE against the sample count.

    *mu* and *a_tau* fix the action dimension; the default is one-dimensional.
    """
    if sigma_tau <= 0:
        raise VerifyError("sigma_tau must be positive; the zero-noise level has no Monte-Carlo error")
    if len(N_list) < 4:
        raise VerifyError("need at least four sample counts to fit a slope with an error bar")
    f = gaussian_energy(beta, varsigma, mu)
    a_tau = np.asarray(a_tau, dtype=float)
    oracle = gaussian_mollified_score(np.asarray(mu), varsigma, sigma_tau, a_tau)
    rows = np.tile(a_tau, (repeats, 1))
    rmse = []
    ess = []
    for n in N_list:
        batch = mc_score_targets_batch(f, rows, sigma_tau, beta, n, rng)
        err = batch.values - oracle
        rmse.append(float(np.sqrt(np.mean(np.sum(err * err, axis=1)))))
        ess.append(float(batch.ess.mean()))
    coef, cov = np.polyfit(np.log(N_list), np.log(rmse), 1, cov=True)
    slope = float(coef[0])
    passed = SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1]
    artifact = write_grid(Path(out_dir) / f"{name}.csv", ["N", "rmse", "mean_ess"], zip(N_list, rmse, ess, strict=True))
    logger.info("Monte-Carlo RMSE slope %.4f", slope, extra={"rmse": rmse})
    return CheckReport(
        name=name,
        passed=bool(passed),
        metrics=[
            ("slope", slope),
            ("slope_stderr", float(np.sqrt(cov[0, 0]))),
            ("repeats", float(repeats)),
            ("rmse_smallest_N", rmse[0]),
            ("rmse_largest_N", rmse[-1]),
        ],
        artifact_path=str(artifact),
    )
