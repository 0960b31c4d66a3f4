"""Built-in safety-constrained control tasks.

* ``point_hazard``: state ``(x, y, vx, vy)``, damped double integrator
  driven by a 2-D acceleration command.
* ``diff_drive``: state ``(x, y, theta)``, unicycle kinematics driven by
  ``(forward speed, turn rate)``.

Both share one layout: start on the left, goal disc on the right and a
hazard disc on the straight line between them, so the greedy path is
unsafe. The per-step cost is the hazard indicator of the *next* position.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field

from soliplex.safepolicy import SafePolicyError
from soliplex.safepolicy.config import EnvName
from soliplex.safepolicy.core import RngStream

logger = logging.getLogger(__name__)

_STATE_DIMS = {EnvName.POINT_HAZARD: 4, EnvName.DIFF_DRIVE: 3}


class EnvError(SafePolicyError):
    pass


class EnvSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: EnvName
    dt: float = Field(0.1, gt=0)
    horizon: int = Field(400, gt=0)
    # episode cost budget
    h: float = Field(25.0, ge=0)
    start_noise: float = Field(0.1, ge=0)
    damping: float = Field(0.95, ge=0, le=1)
    accel_scale: float = Field(1.0, gt=0)
    v_scale: float = Field(1.0, gt=0)
    omega_scale: float = Field(2.0, gt=0)
    start: tuple[float, float] = (-1.2, 0.0)
    goal: tuple[float, float] = (1.2, 0.0)
    goal_radius: float = Field(0.3, gt=0)
    goal_bonus: float = 10.0
    # (center_x, center_y, radius)
    hazards: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 0.4),)

    @property
    def d_s(self) -> int:
        return _STATE_DIMS[self.name]

    @property
    def d_a(self) -> int:
        return 2


@dataclass(frozen=True)
class EnvState:
    s: np.ndarray
    step_count: int = 0
    episode_cost: float = 0.0
    done: bool = False
    # true terminal (goal reached); horizon truncation leaves this False
    reached_goal: bool = False


def make_env_spec(name: str, **overrides) -> EnvSpec:
    """Build the documented defaults for *name* with *overrides* applied."""
    try:
        env_name = EnvName(name)
    except ValueError:
        raise EnvError(f"Unknown environment: {name!r}") from None
    return EnvSpec(name=env_name, **overrides)


def hazard_cost(spec: EnvSpec, position: np.ndarray) -> float:
    """Indicator of the position lying inside any hazard disc."""
    x, y = position[0], position[1]
    for cx, cy, radius in spec.hazards:
        if math.hypot(x - cx, y - cy) < radius:
            return 1.0
    return 0.0


def _goal_distance(spec: EnvSpec, position: np.ndarray) -> float:
    return math.hypot(position[0] - spec.goal[0], position[1] - spec.goal[1])


def reset(spec: EnvSpec, rng: RngStream) -> EnvState:
    """Draw an initial state: the start pose with a uniform box perturbation of the position."""
    if spec.name not in _STATE_DIMS:
        raise EnvError(f"Unknown environment: {spec.name!r}")
    noise = rng.uniform(-1.0, 1.0, size=2) * spec.start_noise
    s = np.zeros(spec.d_s)
    s[0] = spec.start[0] + noise[0]
    s[1] = spec.start[1] + noise[1]
    return EnvState(s=s)


def _dynamics(spec: EnvSpec, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    nxt = s.copy()
    if spec.name == EnvName.POINT_HAZARD:
        velocity = spec.damping * s[2:4] + spec.dt * spec.accel_scale * a
        nxt[2:4] = velocity
        nxt[0:2] = s[0:2] + spec.dt * velocity
    else:
        theta = s[2]
        speed = spec.v_scale * a[0]
        nxt[0] = s[0] + spec.dt * speed * math.cos(theta)
        nxt[1] = s[1] + spec.dt * speed * math.sin(theta)
        nxt[2] = theta + spec.dt * spec.omega_scale * a[1]
    return nxt


def step(spec: EnvSpec, st: EnvState, a) -> tuple[EnvState, float, float, bool]:
    """Advance one step; returns ``(next_state, reward, cost, done)``.

    Raises:
        EnvError: If the episode is already over or the action is malformed.
    """
    if st.done:
        raise EnvError("step() called after the episode ended; call reset()")
    action = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
    if action.shape != (spec.d_a,) or not np.all(np.isfinite(action)):
        raise EnvError(f"Expected a finite action of length {spec.d_a}, got {a!r}")

    nxt = _dynamics(spec, st.s, action)
    dist_prev = _goal_distance(spec, st.s)
    dist_next = _goal_distance(spec, nxt)
    reached = dist_next <= spec.goal_radius
    reward = dist_prev - dist_next + (spec.goal_bonus if reached else 0.0)
    cost = hazard_cost(spec, nxt)
    count = st.step_count + 1
    done = reached or count >= spec.horizon
    new_state = EnvState(
        s=nxt,
        step_count=count,
        episode_cost=st.episode_cost + cost,
        done=done,
        reached_goal=reached,
    )
    return new_state, reward, cost, done


def random_policy_baseline(spec: EnvSpec, episodes: int, rng: RngStream) -> tuple[float, float, float]:
    """Return ``(mean_return, sd_return, mean_episode_cost)`` of uniform-random actions."""
    returns = []
    costs = []
    for _ in range(episodes):
        st = reset(spec, rng)
        total = 0.0
        while not st.done:
            st, reward, _cost, _done = step(spec, st, rng.uniform(-1.0, 1.0, size=spec.d_a))
            total += reward
        returns.append(total)
        costs.append(st.episode_cost)
    return float(np.mean(returns)), float(np.std(returns)), float(np.mean(costs))
