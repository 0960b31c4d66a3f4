"""Domain records, the seeded random-stream contract and the replay buffer.

Random streams use numpy's Philox 4x64 counter-based bit generator keyed by
``seed | (stream_id << 64)`` with the counter starting at zero. Uniform
doubles come from ``Generator.random`` (53-bit mantissa), bounded integers
from ``Generator.integers`` and Gaussians from a Box–Muller transform over
pairs of uniform doubles, so every draw sequence is reproducible from
``(seed, stream_id)`` alone.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from soliplex.safepolicy import SafePolicyError
from soliplex.safepolicy import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY = 1_000_000

# initial allocation; storage doubles until it reaches capacity
_INITIAL_ROWS = 1024


class EmptyBufferError(SafePolicyError):
    def __init__(self) -> None:
        super().__init__("Cannot sample from an empty replay buffer")


class RngStream:
    """A reproducible stream of random draws identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if not 0 <= stream_id < 2**64:
            raise ValueError(f"stream_id must be a 64-bit unsigned integer, got {stream_id}")
        self.seed = seed
        self.stream_id = stream_id
        self._gen = np.random.Generator(np.random.Philox(key=seed | (stream_id << 64)))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def spawn(self, stream_id: int) -> "RngStream":
        """Return a fresh stream with the same seed and another id."""
        return RngStream(self.seed, stream_id)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return low + (high - low) * self._gen.random(size)

    def integers(self, n: int, size=None) -> np.ndarray:
        """Uniform integers in ``[0, n)``."""
        return self._gen.integers(0, n, size=size)

    def normal(self, size=None) -> np.ndarray:
        """Standard normal draws via Box–Muller (cosine branch first, then sine)."""
        shape = () if size is None else tuple(int(s) for s in np.atleast_1d(size))
        count = math.prod(shape)
        pairs = (count + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)  # (0, 1], keeps log finite
        u2 = self._gen.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        z = out[:count].reshape(shape)
        return float(z) if size is None else z


@dataclass(frozen=True)
class Transition:
    """One environment interaction record."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    cost: float
    next_state: np.ndarray
    done: bool

    def validate(self) -> "Transition":
        for name in ("state", "action", "next_state"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(self, f"{name} is not finite")
        if not math.isfinite(self.reward):
            raise ValidationError(self, "reward is not finite")
        if not math.isfinite(self.cost):
            raise ValidationError(self, "cost is not finite")
        if self.cost < 0:
            raise ValidationError(self, "cost must be non-negative")
        return self


@dataclass
class Batch:
    """Stacked view of sampled transitions."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    def __getitem__(self, i: int) -> Transition:
        return Transition(
            state=self.states[i],
            action=self.actions[i],
            reward=float(self.rewards[i]),
            cost=float(self.costs[i]),
            next_state=self.next_states[i],
            done=bool(self.dones[i]),
        )


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions stored as stacked arrays."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY) -> None:
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.cursor = 0
        self.size = 0
        self._data: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return self.size

    def _allocate(self, t: Transition) -> None:
        rows = min(self.capacity, _INITIAL_ROWS)
        self._data = {
            "states": np.zeros((rows, len(t.state))),
            "actions": np.zeros((rows, len(t.action))),
            "rewards": np.zeros(rows),
            "costs": np.zeros(rows),
            "next_states": np.zeros((rows, len(t.next_state))),
            "dones": np.zeros(rows, dtype=bool),
        }

    def _grow(self) -> None:
        rows = len(self._data["rewards"])
        new_rows = min(self.capacity, 2 * rows)
        for key, arr in self._data.items():
            grown = np.zeros((new_rows, *arr.shape[1:]), dtype=arr.dtype)
            grown[:rows] = arr
            self._data[key] = grown

    def push(self, t: Transition) -> None:
        t.validate()
        if self._data is None:
            self._allocate(t)
        if self.cursor >= len(self._data["rewards"]):
            self._grow()
        i = self.cursor
        self._data["states"][i] = t.state
        self._data["actions"][i] = t.action
        self._data["rewards"][i] = t.reward
        self._data["costs"][i] = t.cost
        self._data["next_states"][i] = t.next_state
        self._data["dones"][i] = t.done
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __getitem__(self, slot: int) -> Transition:
        if not 0 <= slot < self.size:
            raise IndexError(slot)
        return self.gather(np.array([slot]))[0]

    def gather(self, indices: np.ndarray) -> Batch:
        return Batch(**{key: arr[indices] for key, arr in self._data.items()})

    def metadata(self) -> dict:
        return {"capacity": self.capacity, "size": self.size, "cursor": self.cursor}


def push_transition(buffer: ReplayBuffer, t: Transition) -> ReplayBuffer:
    """Append *t*, overwriting the oldest entry once the buffer is full.

    Raises:
        ValidationError: If any field is non-finite or the cost is negative.
    """
    buffer.push(t)
    return buffer


def sample_batch(buffer: ReplayBuffer, batch_size: int, rng: RngStream) -> Batch:
    """Draw *batch_size* transitions uniformly with replacement."""
    if buffer.size == 0:
        raise EmptyBufferError
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    return buffer.gather(rng.integers(buffer.size, size=batch_size))
