"""Fully-connected networks with exact reverse-mode gradients.

Weights are stored ``(out, in)`` and applied as ``x @ W.T + b`` to row
batches. Every layer is initialized uniform in ``±1/sqrt(fan_in)`` (weights
and biases); the score-network step embedding is initialized standard
normal. The ReLU derivative at exactly zero is zero.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from dataclasses import field
from typing import Literal

import numpy as np

from soliplex.safepolicy import SafePolicyError
from soliplex.safepolicy.core import RngStream

logger = logging.getLogger(__name__)

Activation = Literal["relu", "silu", "linear"]

# Instrumented call counts ("score_net_eval", "backward_mlp").
counters: Counter = Counter()


class ShapeError(SafePolicyError):
    pass


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "silu":
        return z * _sigmoid(z)
    return z


def _activation_grad(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    if kind == "silu":
        s = _sigmoid(z)
        return s * (1.0 + z * (1.0 - s))
    return np.ones_like(z)


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[Activation, ...]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have one entry per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {i}: weight {w.shape} incompatible with bias {b.shape}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i}: input dim {w.shape[1]} != previous output {self.weights[i - 1].shape[0]}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def tensors(self) -> list[np.ndarray]:
        """Parameter arrays in ``[W0, b0, W1, b1, ...]`` order."""
        out = []
        for w, b in zip(self.weights, self.biases, strict=True):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=self.activations,
        )

    def shapes(self) -> list[tuple[int, ...]]:
        return [t.shape for t in self.tensors()]


@dataclass
class MlpCache:
    params: MlpParams
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    squeeze: bool


@dataclass
class GradBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray | None = None

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases, strict=True):
            out.extend((w, b))
        return out


def init_mlp(sizes: list[int], activations: tuple[Activation, ...], rng: RngStream) -> MlpParams:
    """Initialize layers ``sizes[0] -> sizes[1] -> ...`` uniform in ``±1/sqrt(fan_in)``."""
    if len(activations) != len(sizes) - 1:
        raise ShapeError(f"{len(sizes) - 1} layers need as many activations, got {len(activations)}")
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:], strict=True):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights=weights, biases=biases, activations=tuple(activations))


def forward_mlp(p: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Apply the network to one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != p.in_dim:
        raise ShapeError(f"expected input of width {p.in_dim}, got shape {x.shape}")
    inputs = []
    preacts = []
    for w, b, kind in zip(p.weights, p.biases, p.activations, strict=True):
        inputs.append(h)
        z = h @ w.T + b
        preacts.append(z)
        h = _activate(kind, z)
    return (h[0] if squeeze else h), MlpCache(params=p, inputs=inputs, preacts=preacts, squeeze=squeeze)


def backward_mlp(p: MlpParams, cache: MlpCache, upstream: np.ndarray) -> GradBundle:
    """Reverse-mode gradients of ``sum(upstream * y)``, summed over the batch."""
    if cache.params is not p:
        raise ShapeError("cache was produced by a different parameter set")
    counters["backward_mlp"] += 1
    g = np.asarray(upstream, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.preacts[-1].shape:
        raise ShapeError(f"upstream shape {g.shape} does not match output {cache.preacts[-1].shape}")
    n = len(p.weights)
    dw: list[np.ndarray] = [None] * n
    db: list[np.ndarray] = [None] * n
    for i in reversed(range(n)):
        dz = g * _activation_grad(p.activations[i], cache.preacts[i])
        dw[i] = dz.T @ cache.inputs[i]
        db[i] = dz.sum(axis=0)
        g = dz @ p.weights[i]
    return GradBundle(weights=dw, biases=db, input=g[0] if cache.squeeze else g)


# --- score network ---


@dataclass
class ScoreNetParams:
    embedding: np.ndarray  # (K, embed_dim)
    trunk: MlpParams

    def __post_init__(self):
        if self.trunk.in_dim <= self.embedding.shape[1]:
            raise ShapeError("trunk input must cover state, action and step embedding")

    @property
    def K(self) -> int:
        return self.embedding.shape[0]

    def copy(self) -> "ScoreNetParams":
        return ScoreNetParams(embedding=self.embedding.copy(), trunk=self.trunk.copy())

    def tensors(self) -> list[np.ndarray]:
        return [self.embedding, *self.trunk.tensors()]


@dataclass
class ScoreNetCache:
    trunk: MlpCache
    steps: np.ndarray
    d_a: int


@dataclass
class ScoreNetGrads:
    embedding: np.ndarray
    trunk: GradBundle

    def tensors(self) -> list[np.ndarray]:
        return [self.embedding, *self.trunk.tensors()]


def init_score_net(d_s: int, d_a: int, K: int, embed_dim: int, hidden: tuple[int, ...], rng: RngStream) -> ScoreNetParams:
    embedding = rng.normal(size=(K, embed_dim))
    sizes = [d_s + d_a + embed_dim, *hidden, d_a]
    trunk = init_mlp(sizes, tuple(["relu"] * len(hidden) + ["linear"]), rng)
    return ScoreNetParams(embedding=embedding, trunk=trunk)


def _steps(p: ScoreNetParams, tau, rows: int) -> np.ndarray:
    steps = np.broadcast_to(np.asarray(tau, dtype=int), (rows,))
    if np.any(steps < 1) or np.any(steps > p.K):
        raise ShapeError(f"diffusion step must lie in 1..{p.K}, got {tau!r}")
    return steps


def score_net_forward(p: ScoreNetParams, s: np.ndarray, a: np.ndarray, tau) -> tuple[np.ndarray, ScoreNetCache]:
    """Evaluate the trunk on ``concat(s, a, embedding[tau - 1])`` row-wise."""
    s = np.atleast_2d(s)
    a2 = np.atleast_2d(a)
    rows = a2.shape[0]
    if s.shape[0] == 1 and rows > 1:
        s = np.broadcast_to(s, (rows, s.shape[1]))
    steps = _steps(p, tau, rows)
    x = np.concatenate([s, a2, p.embedding[steps - 1]], axis=1)
    y, cache = forward_mlp(p.trunk, x)
    if np.ndim(a) == 1:
        y = y[0]
    return y, ScoreNetCache(trunk=cache, steps=steps, d_a=a2.shape[1])


def score_net_eval(p: ScoreNetParams, s: np.ndarray, a: np.ndarray, tau) -> np.ndarray:
    """Score estimate phi_theta(s, a, tau); counted in ``counters["score_net_eval"]``."""
    counters["score_net_eval"] += 1
    y, _ = score_net_forward(p, s, a, tau)
    return y


def score_net_backward(p: ScoreNetParams, cache: ScoreNetCache, upstream: np.ndarray) -> ScoreNetGrads:
    grads = backward_mlp(p.trunk, cache.trunk, np.atleast_2d(upstream))
    embed_dim = p.embedding.shape[1]
    d_embed = np.zeros_like(p.embedding)
    np.add.at(d_embed, cache.steps - 1, grads.input[:, -embed_dim:])
    return ScoreNetGrads(embedding=d_embed, trunk=grads)


# --- cost ensemble ---


@dataclass
class CostEnsembleParams:
    members: list[MlpParams]

    def __post_init__(self):
        if not self.members:
            raise ShapeError("a cost ensemble needs at least one member")
        shapes = self.members[0].shapes()
        for i, member in enumerate(self.members[1:], start=1):
            if member.shapes() != shapes:
                raise ShapeError(f"ensemble member {i} differs in shape from member 0")

    @property
    def M(self) -> int:
        return len(self.members)

    def copy(self) -> "CostEnsembleParams":
        return CostEnsembleParams(members=[m.copy() for m in self.members])


def init_cost_ensemble(sizes: list[int], M: int, rng: RngStream, first_stream: int) -> CostEnsembleParams:
    """Each member draws from its own stream ``first_stream + i``."""
    acts = tuple(["silu"] * (len(sizes) - 2) + ["linear"])
    return CostEnsembleParams(members=[init_mlp(sizes, acts, rng.spawn(first_stream + i)) for i in range(M)])


def polyak_update(target: MlpParams, online: MlpParams, kappa: float) -> MlpParams:
    """``target <- (1 - kappa) * target + kappa * online`` elementwise, in place."""
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    if target.shapes() != online.shapes():
        raise ShapeError("target and online networks differ in shape")
    for t, o in zip(target.tensors(), online.tensors(), strict=True):
        t *= 1.0 - kappa
        t += kappa * o
    return target


# --- optimizer ---


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    weight_decay: list[float] = field(default_factory=list)

    @classmethod
    def for_tensors(cls, tensors: list[np.ndarray], weight_decay: list[float] | None = None) -> "AdamState":
        decay = list(weight_decay) if weight_decay is not None else [0.0] * len(tensors)
        if len(decay) != len(tensors):
            raise ShapeError("one weight-decay value per tensor required")
        return cls(m=[np.zeros_like(t) for t in tensors], v=[np.zeros_like(t) for t in tensors], weight_decay=decay)


def global_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def adam_step(
    tensors: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    clip_norm: float | None = None,
) -> float:
    """One in-place Adam update with global-norm clipping and decoupled decay.

    Returns the pre-clipping gradient norm.
    """
    norm = global_norm(grads)
    scale = clip_norm / norm if clip_norm is not None and norm > clip_norm else 1.0
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v, wd in zip(tensors, grads, state.m, state.v, state.weight_decay, strict=True):
        g = g * scale
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if wd:
            p -= lr * wd * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return norm
