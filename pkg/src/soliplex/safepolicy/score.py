"""Energy-guided score: closed-form, quadrature and Monte-Carlo estimators.

For a Boltzmann clean distribution ``pi0(a) ∝ exp(-L(a) / beta)`` mollified
by ``N(0, sigma^2 I)``, the score at a noisy action ``a_tau`` is the
posterior-weighted mean of ``-grad L / beta`` under ``N(a_tau, sigma^2 I)``.
The Monte-Carlo estimator draws the posterior samples from that Gaussian and
self-normalizes the Boltzmann weights with a max-shift (log-sum-exp).
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss

from soliplex.safepolicy import SafePolicyError
from soliplex.safepolicy.core import RngStream

logger = logging.getLogger(__name__)

QUADRATURE_NODES = 64


class ScoreError(SafePolicyError):
    pass


@dataclass(frozen=True)
class EnergyFn:
    """An energy over actions with its exact action-gradient.

    ``value`` maps ``(..., d_a) -> (...)`` and ``grad`` maps
    ``(..., d_a) -> (..., d_a)``. ``value_and_grad`` may share work between
    the two (critic-backed energies run one forward/backward pass).
    """

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    descriptor: str = ""
    value_and_grad: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None

    def evaluate(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.value_and_grad is not None:
            return self.value_and_grad(a)
        return self.value(a), self.grad(a)

    @classmethod
    def oracle(
        cls,
        value: Callable[[np.ndarray], np.ndarray],
        grad: Callable[[np.ndarray], np.ndarray],
        descriptor: str,
        check_points: np.ndarray,
        step: float = 1e-5,
        rtol: float = 1e-5,
    ) -> "EnergyFn":
        """Build an energy after checking *grad* against central differences at *check_points*."""
        check_points = np.atleast_2d(check_points)
        d = check_points.shape[1]
        eye = np.eye(d) * step
        for point in check_points:
            numeric = np.array([(value(point + e) - value(point - e)) / (2 * step) for e in eye])
            analytic = np.asarray(grad(point))
            scale = max(float(np.max(np.abs(analytic))), 1.0)
            if np.max(np.abs(numeric - analytic)) > rtol * scale:
                raise ScoreError(f"{descriptor}: gradient disagrees with finite differences at {point}")
        return cls(value=value, grad=grad, descriptor=descriptor)


@dataclass(frozen=True)
class ScoreTarget:
    value: np.ndarray
    weights: np.ndarray
    ess: float


@dataclass(frozen=True)
class BatchScoreTargets:
    values: np.ndarray  # (B, d_a), NaN on non-finite rows
    weights: np.ndarray  # (B, N)
    ess: np.ndarray  # (B,)
    finite: np.ndarray  # (B,) bool
    first_bad: np.ndarray  # (B,) index of the first non-finite sample, -1 if none


def gaussian_mollified_score(mu, varsigma: float, sigma_tau: float, a) -> np.ndarray:
    """Score of ``N(mu, (varsigma^2 + sigma_tau^2) I)`` at *a*."""
    return -(np.asarray(a, dtype=float) - mu) / (varsigma**2 + sigma_tau**2)


def quadrature_score(f: EnergyFn, a_tau, sigma_tau: float, beta: float, nodes: int = QUADRATURE_NODES) -> np.ndarray:
    """Gauss–Hermite evaluation of the posterior-weighted ``-grad L / beta`` for ``d_a <= 2``."""
    a_tau = np.atleast_1d(np.asarray(a_tau, dtype=float))
    d = a_tau.shape[0]
    if d not in (1, 2):
        raise ScoreError(f"quadrature oracle supports 1-D and 2-D actions, got {d}")
    if beta <= 0:
        raise ScoreError(f"beta must be positive, got {beta}")
    if sigma_tau == 0:
        return -np.asarray(f.grad(a_tau)) / beta
    x, w = hermgauss(nodes)
    if d == 1:
        offsets = x[:, None]
        log_w = np.log(w)
    else:
        gx, gy = np.meshgrid(x, x, indexing="ij")
        offsets = np.stack([gx.ravel(), gy.ravel()], axis=1)
        log_w = (np.log(w)[:, None] + np.log(w)[None, :]).ravel()
    points = a_tau + np.sqrt(2.0) * sigma_tau * offsets
    energy, grad = f.evaluate(points)
    exponent = log_w - np.asarray(energy) / beta
    p = np.exp(exponent - exponent.max())
    return (p[:, None] * (-np.asarray(grad) / beta)).sum(axis=0) / p.sum()


def mc_score_targets_batch(
    f: EnergyFn,
    a_tau: np.ndarray,
    sigma_tau,
    beta: float,
    N: int,
    rng: RngStream,
) -> BatchScoreTargets:
    """Weighted Monte-Carlo score for each row of ``a_tau`` (shape ``(B, d_a)``).

    Rows whose energies or gradients are not all finite are flagged in
    ``finite`` and carry NaN values.
    """
    if N < 1:
        raise ScoreError(f"N must be >= 1, got {N}")
    a_tau = np.asarray(a_tau, dtype=float)
    rows, d = a_tau.shape
    sigma = np.broadcast_to(np.asarray(sigma_tau, dtype=float), (rows,))
    if np.any(sigma <= 0):
        raise ScoreError("sigma_tau must be positive for Monte-Carlo estimation")
    samples = a_tau[:, None, :] + sigma[:, None, None] * rng.normal(size=(rows, N, d))
    energy, grad = f.evaluate(samples)
    exponent = -np.asarray(energy, dtype=float) / beta
    grad = np.asarray(grad, dtype=float)
    bad = ~np.isfinite(exponent) | ~np.all(np.isfinite(grad), axis=2)
    finite = ~bad.any(axis=1)
    first_bad = np.where(finite, -1, bad.argmax(axis=1))
    exponent = np.where(finite[:, None], exponent, 0.0)
    shifted = np.exp(exponent - exponent.max(axis=1, keepdims=True))
    weights = shifted / shifted.sum(axis=1, keepdims=True)
    safe_grad = np.where(finite[:, None, None], grad, 0.0)
    values = np.einsum("bn,bnd->bd", weights, -safe_grad / beta)
    values[~finite] = np.nan
    ess = 1.0 / np.sum(weights * weights, axis=1)
    return BatchScoreTargets(values=values, weights=weights, ess=ess, finite=finite, first_bad=first_bad)


def mc_score_target(f: EnergyFn, a_tau, sigma_tau: float, beta: float, N: int, rng: RngStream) -> ScoreTarget:
    """Monte-Carlo score target for a single noisy action.

    Raises:
        ScoreError: If any sampled energy is non-finite (names the sample).
    """
    a_tau = np.atleast_1d(np.asarray(a_tau, dtype=float))
    if sigma_tau <= 0:
        raise ScoreError("sigma_tau must be positive for Monte-Carlo estimation")
    batch = mc_score_targets_batch(f, a_tau[None, :], sigma_tau, beta, N, rng)
    if not batch.finite[0]:
        raise ScoreError(f"non-finite energy at Monte-Carlo sample {int(batch.first_bad[0])} of {f.descriptor or 'energy'}")
    return ScoreTarget(value=batch.values[0], weights=batch.weights[0], ess=float(batch.ess[0]))
