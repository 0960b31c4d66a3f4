"""Variance-exploding noise ladder.

``sigma[0] = 0`` is the clean action distribution; ``sigma[1..K]`` are
geometrically spaced from ``sigma_min`` to ``sigma_max`` inclusive.
``dsq[tau - 1] = sigma[tau]**2 - sigma[tau - 1]**2`` is the per-step
variance increment used by both the reverse sampler drift and its noise.
"""

import logging
from dataclasses import dataclass

import numpy as np

from soliplex.safepolicy import SafePolicyError
from soliplex.safepolicy.core import RngStream

logger = logging.getLogger(__name__)


class ScheduleError(SafePolicyError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    K: int
    sigma: np.ndarray  # K + 1 entries
    dsq: np.ndarray  # K entries, dsq[tau - 1] for tau = 1..K

    def increment(self, tau: int) -> float:
        """Squared-noise increment of reverse step *tau*."""
        self.check_step(tau)
        return float(self.dsq[tau - 1])

    def check_step(self, tau) -> None:
        if np.any(np.asarray(tau) < 1) or np.any(np.asarray(tau) > self.K):
            raise ScheduleError(f"diffusion step must lie in 1..{self.K}, got {tau!r}")


def build_schedule(K: int, sigma_min: float, sigma_max: float) -> NoiseSchedule:
    if K < 1:
        raise ScheduleError(f"K must be >= 1, got {K}")
    if not 0 < sigma_min < sigma_max:
        raise ScheduleError(f"need 0 < sigma_min < sigma_max, got ({sigma_min}, {sigma_max})")
    sigma = np.zeros(K + 1)
    if K == 1:
        sigma[1] = sigma_max
    else:
        exponents = np.arange(K) / (K - 1)
        sigma[1:] = sigma_min * (sigma_max / sigma_min) ** exponents
        sigma[K] = sigma_max
    dsq = np.diff(sigma**2)
    if np.any(dsq <= 0):
        raise ScheduleError("noise ladder must be strictly increasing")
    return NoiseSchedule(K=K, sigma=sigma, dsq=dsq)


def forward_perturb(a0: np.ndarray, tau, sch: NoiseSchedule, rng: RngStream) -> np.ndarray:
    """Return ``a0 + sigma[tau] * eps`` with standard-normal ``eps``.

    *tau* may be a scalar or one step per row of a batch ``a0``.
    """
    sch.check_step(tau)
    a0 = np.asarray(a0, dtype=float)
    scale = sch.sigma[np.asarray(tau, dtype=int)]
    if a0.ndim > 1:
        scale = np.reshape(scale, (-1,) + (1,) * (a0.ndim - 1))
    return a0 + scale * rng.normal(size=a0.shape)
