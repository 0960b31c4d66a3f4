"""Lagrangian energies over actions and projected dual ascent.

All functions accept scalars or arrays with a shared leading batch shape;
gradients carry one trailing action axis.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass
from dataclasses import replace

import numpy as np

from soliplex.safepolicy import SafePolicyError
from soliplex.safepolicy.config import Variant

logger = logging.getLogger(__name__)


class EnergyError(SafePolicyError):
    pass


@dataclass(frozen=True)
class EnergyEval:
    """Critic values and action-gradients at state-action pairs."""

    q: np.ndarray  # min over the double-Q pair
    qc: np.ndarray  # mean over the cost ensemble
    grad_q: np.ndarray
    grad_qc: np.ndarray


@dataclass(frozen=True)
class DualState:
    lambda_: float
    rho: float
    h: float
    eta_lambda: float

    def __post_init__(self):
        if self.lambda_ < 0:
            raise EnergyError(f"lambda must be non-negative, got {self.lambda_}")
        if self.eta_lambda <= 0:
            raise EnergyError(f"eta_lambda must be positive, got {self.eta_lambda}")


def _check_rho(d: DualState) -> None:
    if d.rho <= 0:
        raise EnergyError(f"rho must be positive, got {d.rho}")


def lagrangian(e: EnergyEval, d: DualState) -> np.ndarray:
    """``-Q + lambda * (Qc - h)``."""
    return -e.q + d.lambda_ * (e.qc - d.h)


def lagrangian_grad_a(e: EnergyEval, d: DualState) -> np.ndarray:
    return -e.grad_q + d.lambda_ * e.grad_qc


def _hinge(e: EnergyEval, d: DualState) -> np.ndarray:
    return np.maximum(d.lambda_ + d.rho * (e.qc - d.h), 0.0)


def aug_lagrangian(e: EnergyEval, d: DualState) -> np.ndarray:
    """``-Q + ([lambda + rho (Qc - h)]_+^2 - lambda^2) / (2 rho)``."""
    _check_rho(d)
    return -e.q + (_hinge(e, d) ** 2 - d.lambda_**2) / (2.0 * d.rho)


def aug_lagrangian_grad_a(e: EnergyEval, d: DualState) -> np.ndarray:
    """Action-gradient of the augmented Lagrangian; multiplier zero on the hinge boundary."""
    _check_rho(d)
    return -e.grad_q + np.expand_dims(_hinge(e, d), -1) * e.grad_qc


def energy_functions(
    variant: Variant,
) -> tuple[Callable[[EnergyEval, DualState], np.ndarray], Callable[[EnergyEval, DualState], np.ndarray]]:
    """Return the ``(value, grad)`` pair guiding the sampler for *variant*."""
    if variant == Variant.STANDARD:
        return lagrangian, lagrangian_grad_a
    return aug_lagrangian, aug_lagrangian_grad_a


def dual_update(d: DualState, mean_qc: float) -> DualState:
    """``lambda <- [lambda + eta (mean_qc - h)]_+``; other fields unchanged."""
    if not np.isfinite(mean_qc):
        raise EnergyError(f"mean cost value must be finite, got {mean_qc}")
    return replace(d, lambda_=max(0.0, d.lambda_ + d.eta_lambda * (mean_qc - d.h)))
