"""Closed-form critics for checks that must not depend on training."""

import enum
from dataclasses import dataclass

import numpy as np

from soliplex.safepolicy.core import RngStream
from soliplex.safepolicy.energy import EnergyEval


class CostShape(enum.StrEnum):
    AFFINE = "affine"
    SMOOTH = "smooth"


@dataclass(frozen=True)
class AnalyticCritics:
    """``Q(a) = -q_scale * |a - mu_r|^2`` with an affine or quadratic cost critic.

    Affine: ``Qc(a) = g . a + b``. Smooth: ``Qc(a) = |a - mu_c|^2 + b``.
    States are accepted for interface compatibility and ignored.
    """

    mu_r: tuple[float, ...]
    shape: CostShape = CostShape.AFFINE
    g: tuple[float, ...] = (0.0, 0.0)
    b: float = 0.0
    mu_c: tuple[float, ...] = (0.0, 0.0)
    q_scale: float = 1.0

    @property
    def cost_hessian_norm(self) -> float:
        """Spectral norm of the cost critic's Hessian."""
        return 0.0 if self.shape == CostShape.AFFINE else 2.0

    def energy_eval(self, states, actions, with_grad: bool = True) -> EnergyEval:
        a = np.asarray(actions, dtype=float)
        dr = a - np.asarray(self.mu_r)
        q = -self.q_scale * np.sum(dr * dr, axis=-1)
        grad_q = -2.0 * self.q_scale * dr
        if self.shape == CostShape.AFFINE:
            g = np.asarray(self.g)
            qc = a @ g + self.b
            grad_qc = np.broadcast_to(g, a.shape).copy()
        else:
            dc = a - np.asarray(self.mu_c)
            qc = np.sum(dc * dc, axis=-1) + self.b
            grad_qc = 2.0 * dc
        return EnergyEval(q=q, qc=qc, grad_q=grad_q, grad_qc=grad_qc)


def random_test_functions(rng: RngStream, trials: int = 3) -> list[AnalyticCritics]:
    """Affine and smooth cost critics with randomized parameters, *trials* of each.

    Offsets are drawn so that, against ``h = 0`` and a multiplier of 0.5,
    the hinge switches on and off inside ``[-1, 1]^2``.
    """
    out = []
    for _ in range(trials):
        direction = rng.normal(size=2)
        out.append(
            AnalyticCritics(
                mu_r=tuple(rng.uniform(-0.5, 0.5, size=2)),
                shape=CostShape.AFFINE,
                g=tuple(direction / np.linalg.norm(direction)),
                b=float(rng.uniform(-0.3, 0.3)),
            )
        )
    for _ in range(trials):
        out.append(
            AnalyticCritics(
                mu_r=tuple(rng.uniform(-0.5, 0.5, size=2)),
                shape=CostShape.SMOOTH,
                mu_c=tuple(rng.uniform(-0.5, 0.5, size=2)),
                b=float(rng.uniform(-1.0, -0.6)),
            )
        )
    return out
