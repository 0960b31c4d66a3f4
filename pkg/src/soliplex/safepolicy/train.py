"""Off-policy training loop for the diffusion policy.

One gradient step runs, in order: critic TD updates, the score-network
regression onto Monte-Carlo targets, the dual update (so score targets see
the pre-update multiplier), and every ``target_update_every`` steps a
Polyak update of the critic target networks. The policy has no target copy:
TD targets and evaluation both sample from the online score network.

All state lives in :class:`AgentState` and is mutated in place; the update
functions return the statistics they computed.
"""

import enum
import logging
import math
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from pathlib import Path
from typing import Literal
from typing import Protocol

import numpy as np

from soliplex.safepolicy.checkpoint import CheckpointError
from soliplex.safepolicy.checkpoint import load_checkpoint
from soliplex.safepolicy.checkpoint import save_checkpoint
from soliplex.safepolicy.config import RunConfig
from soliplex.safepolicy.config import TrainConfig
from soliplex.safepolicy.config import Variant
from soliplex.safepolicy.config import dump_run_config
from soliplex.safepolicy.config import parse_run_config
from soliplex.safepolicy.config import settings
from soliplex.safepolicy.core import Batch
from soliplex.safepolicy.core import ReplayBuffer
from soliplex.safepolicy.core import RngStream
from soliplex.safepolicy.core import Transition
from soliplex.safepolicy.core import push_transition
from soliplex.safepolicy.core import sample_batch
from soliplex.safepolicy.csvlog import EpochLogRow
from soliplex.safepolicy.csvlog import write_header
from soliplex.safepolicy.csvlog import write_log_row
from soliplex.safepolicy.energy import DualState
from soliplex.safepolicy.energy import EnergyEval
from soliplex.safepolicy.energy import dual_update
from soliplex.safepolicy.energy import energy_functions
from soliplex.safepolicy.env import EnvSpec
from soliplex.safepolicy.env import EnvState
from soliplex.safepolicy.env import make_env_spec
from soliplex.safepolicy.env import reset
from soliplex.safepolicy.env import step
from soliplex.safepolicy.net import AdamState
from soliplex.safepolicy.net import CostEnsembleParams
from soliplex.safepolicy.net import MlpParams
from soliplex.safepolicy.net import ScoreNetParams
from soliplex.safepolicy.net import adam_step
from soliplex.safepolicy.net import backward_mlp
from soliplex.safepolicy.net import forward_mlp
from soliplex.safepolicy.net import init_cost_ensemble
from soliplex.safepolicy.net import init_mlp
from soliplex.safepolicy.net import init_score_net
from soliplex.safepolicy.net import polyak_update
from soliplex.safepolicy.net import score_net_backward
from soliplex.safepolicy.net import score_net_eval
from soliplex.safepolicy.net import score_net_forward
from soliplex.safepolicy.schedule import NoiseSchedule
from soliplex.safepolicy.schedule import build_schedule
from soliplex.safepolicy.schedule import forward_perturb
from soliplex.safepolicy.score import EnergyFn
from soliplex.safepolicy.score import mc_score_targets_batch

logger = logging.getLogger(__name__)

LOG_FILE = "epochs.csv"
CONFIG_FILE = "config.yml"
FINAL_CHECKPOINT = "final"

SampleMode = Literal["train", "eval"]


class Critics(Protocol):
    """Anything that evaluates critic values and action-gradients."""

    def energy_eval(self, states: np.ndarray, actions: np.ndarray, with_grad: bool = True) -> EnergyEval: ...


def make_energy_fn(critics: Critics, dual: DualState, variant: Variant, states: np.ndarray) -> EnergyFn:
    """Wrap *critics* at fixed *states* as an energy over actions for *variant*."""
    value, grad = energy_functions(variant)

    def value_and_grad(a):
        e = critics.energy_eval(states, a)
        return value(e, dual), grad(e, dual)

    return EnergyFn(
        value=lambda a: value(critics.energy_eval(states, a, with_grad=False), dual),
        grad=lambda a: grad(critics.energy_eval(states, a), dual),
        descriptor=f"{variant} lagrangian",
        value_and_grad=value_and_grad,
    )


class Stream(enum.IntEnum):
    """Stream ids under the run seed; ensemble member ``i`` uses ``ENSEMBLE + i``."""

    INIT = 0
    ENV = 1
    ACTION = 2
    BATCH = 3
    UPDATE = 4
    EVAL = 5
    FINAL_EVAL = 6
    BASELINE = 7
    ENSEMBLE = 100


@dataclass
class TrainStreams:
    env: RngStream
    action: RngStream
    batch: RngStream
    update: RngStream
    eval: RngStream

    @classmethod
    def from_seed(cls, seed: int) -> "TrainStreams":
        return cls(
            env=RngStream(seed, Stream.ENV),
            action=RngStream(seed, Stream.ACTION),
            batch=RngStream(seed, Stream.BATCH),
            update=RngStream(seed, Stream.UPDATE),
            eval=RngStream(seed, Stream.EVAL),
        )


@dataclass
class AgentState:
    cfg: TrainConfig
    variant: Variant
    d_s: int
    d_a: int
    score_net: ScoreNetParams
    q1: MlpParams
    q2: MlpParams
    q1_target: MlpParams
    q2_target: MlpParams
    cost: CostEnsembleParams
    cost_target: CostEnsembleParams
    dual: DualState
    opt: dict[str, AdamState] = field(default_factory=dict)
    env_steps: int = 0
    grad_steps: int = 0
    episodes: int = 0

    def energy_eval(self, states: np.ndarray, actions: np.ndarray, with_grad: bool = True) -> EnergyEval:
        """Critic values at ``(states, actions)`` with their action-gradients.

        *actions* has shape ``(*lead, d_a)``; *states* is one state or has a
        leading shape that is a prefix of ``lead`` (e.g. ``(B, d_s)`` against
        ``(B, N, d_a)``) and is broadcast along the remaining axes.
        """
        a = np.asarray(actions, dtype=float)
        s = np.asarray(states, dtype=float)
        while s.ndim < a.ndim:
            s = s[..., None, :]
        lead = a.shape[:-1]
        s = np.broadcast_to(s, (*lead, self.d_s))
        x = np.concatenate([s.reshape(-1, self.d_s), a.reshape(-1, self.d_a)], axis=1)

        y1, c1 = forward_mlp(self.q1, x)
        y2, c2 = forward_mlp(self.q2, x)
        q = np.minimum(y1[:, 0], y2[:, 0])
        ys = []
        caches = []
        for member in self.cost.members:
            y, cache = forward_mlp(member, x)
            ys.append(y[:, 0])
            caches.append(cache)
        qc = np.mean(ys, axis=0)

        grad_q = np.zeros((len(x), self.d_a))
        grad_qc = np.zeros((len(x), self.d_a))
        if with_grad:
            ones = np.ones((len(x), 1))
            g1 = backward_mlp(self.q1, c1, ones).input[:, self.d_s :]
            g2 = backward_mlp(self.q2, c2, ones).input[:, self.d_s :]
            grad_q = np.where((y1[:, 0] <= y2[:, 0])[:, None], g1, g2)
            for member, cache in zip(self.cost.members, caches, strict=True):
                grad_qc += backward_mlp(member, cache, ones).input[:, self.d_s :]
            grad_qc /= self.cost.M
        return EnergyEval(
            q=q.reshape(lead),
            qc=qc.reshape(lead),
            grad_q=grad_q.reshape(*lead, self.d_a),
            grad_qc=grad_qc.reshape(*lead, self.d_a),
        )

    def energy_fn(self, states: np.ndarray) -> EnergyFn:
        """Energy over actions at *states* for the agent's variant and current multiplier."""
        return make_energy_fn(self, self.dual, self.variant, states)

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Every learned parameter keyed by a stable name, in a fixed order."""
        out: dict[str, np.ndarray] = {}

        def add_mlp(prefix: str, p: MlpParams):
            for i, (w, b) in enumerate(zip(p.weights, p.biases, strict=True)):
                out[f"{prefix}/W{i}"] = w
                out[f"{prefix}/b{i}"] = b

        out["score_net/embedding"] = self.score_net.embedding
        add_mlp("score_net/trunk", self.score_net.trunk)
        for name in ("q1", "q2", "q1_target", "q2_target"):
            add_mlp(name, getattr(self, name))
        for name in ("cost", "cost_target"):
            for i, member in enumerate(getattr(self, name).members):
                add_mlp(f"{name}/{i}", member)
        return out


def _cost_decay(member: MlpParams, per_layer: tuple[float, ...]) -> list[float]:
    decay = []
    for wd in per_layer[: len(member.weights)]:
        decay.extend((wd, 0.0))
    return decay


def init_agent(cfg: TrainConfig, spec: EnvSpec, variant: Variant = Variant.AUGMENTED) -> AgentState:
    """Fresh networks drawn from the run seed's init and ensemble streams."""
    rng = RngStream(cfg.seed, Stream.INIT)
    d_s, d_a = spec.d_s, spec.d_a
    score_net = init_score_net(d_s, d_a, cfg.K, cfg.embed_dim, cfg.score_hidden, rng)
    critic_sizes = [d_s + d_a, *cfg.critic_hidden, 1]
    critic_acts = tuple(["relu"] * len(cfg.critic_hidden) + ["linear"])
    q1 = init_mlp(critic_sizes, critic_acts, rng)
    q2 = init_mlp(critic_sizes, critic_acts, rng)
    cost = init_cost_ensemble([d_s + d_a, *cfg.cost_hidden, 1], cfg.M, rng, first_stream=Stream.ENSEMBLE)
    agent = AgentState(
        cfg=cfg,
        variant=Variant(variant),
        d_s=d_s,
        d_a=d_a,
        score_net=score_net,
        q1=q1,
        q2=q2,
        q1_target=q1.copy(),
        q2_target=q2.copy(),
        cost=cost,
        cost_target=cost.copy(),
        dual=DualState(lambda_=cfg.lambda_init, rho=cfg.rho, h=spec.h, eta_lambda=cfg.eta_lambda),
    )
    agent.opt["score"] = AdamState.for_tensors(score_net.tensors())
    agent.opt["q1"] = AdamState.for_tensors(q1.tensors())
    agent.opt["q2"] = AdamState.for_tensors(q2.tensors())
    for i, member in enumerate(cost.members):
        agent.opt[f"cost/{i}"] = AdamState.for_tensors(member.tensors(), _cost_decay(member, cfg.cost_weight_decay))
    return agent


def sample_action(
    agent: AgentState,
    s: np.ndarray,
    sch: NoiseSchedule,
    rng: RngStream,
    mode: SampleMode = "train",
    clip: bool = True,
) -> np.ndarray:
    """Run the K-step reverse sampler from ``N(0, sigma[K]^2 I)``.

    Exactly K evaluations of the online score network and no critic work.
    Eval mode differs only by dropping the injected noise of the last
    (``tau = 1``) step. *s* may be one state or a batch of states.
    """
    s = np.asarray(s, dtype=float)
    shape = (agent.d_a,) if s.ndim == 1 else (s.shape[0], agent.d_a)
    a = sch.sigma[sch.K] * rng.normal(size=shape)
    for tau in range(sch.K, 0, -1):
        dsq = sch.increment(tau)
        a = a + dsq * score_net_eval(agent.score_net, s, a, tau)
        if mode == "eval" and tau == 1:
            continue
        a = a + math.sqrt(dsq) * rng.normal(size=shape)
    return np.clip(a, -1.0, 1.0) if clip else a


def critic_targets(batch: Batch, agent: AgentState, sch: NoiseSchedule, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """TD targets from the target critics at ``a' ~ pi(. | s')`` (online score net)."""
    cfg = agent.cfg
    a_next = sample_action(agent, batch.next_states, sch, rng, "train")
    x = np.concatenate([batch.next_states, a_next], axis=1)
    q1, _ = forward_mlp(agent.q1_target, x)
    q2, _ = forward_mlp(agent.q2_target, x)
    qc = np.mean([forward_mlp(m, x)[0][:, 0] for m in agent.cost_target.members], axis=0)
    live = 1.0 - batch.dones.astype(float)
    y_q = batch.rewards + cfg.gamma * live * np.minimum(q1[:, 0], q2[:, 0])
    y_qc = batch.costs + cfg.gamma_c * live * qc
    return y_q, y_qc


def _regress(agent: AgentState, key: str, p: MlpParams, x: np.ndarray, y: np.ndarray) -> float:
    pred, cache = forward_mlp(p, x)
    resid = pred[:, 0] - y
    grads = backward_mlp(p, cache, (2.0 * resid / len(y))[:, None])
    cfg = agent.cfg
    adam_step(p.tensors(), grads.tensors(), agent.opt[key], cfg.lr, cfg.adam_betas, cfg.adam_eps, cfg.grad_clip)
    return float(np.mean(resid * resid))


@dataclass(frozen=True)
class CriticLosses:
    q_loss: float
    qc_loss: float


def update_critics(agent: AgentState, batch: Batch, targets: tuple[np.ndarray, np.ndarray]) -> CriticLosses:
    """One Adam step per critic on its mean-squared TD error; targets are constants."""
    y_q, y_qc = (np.array(t, dtype=float, copy=True) for t in targets)
    x = np.concatenate([batch.states, batch.actions], axis=1)
    q_losses = [_regress(agent, "q1", agent.q1, x, y_q), _regress(agent, "q2", agent.q2, x, y_q)]
    qc_losses = [_regress(agent, f"cost/{i}", m, x, y_qc) for i, m in enumerate(agent.cost.members)]
    return CriticLosses(q_loss=float(np.mean(q_losses)), qc_loss=float(np.mean(qc_losses)))


@dataclass(frozen=True)
class ScoreUpdate:
    loss: float
    mean_ess: float
    skipped: int


def update_score_net(
    agent: AgentState,
    batch: Batch,
    sch: NoiseSchedule,
    rng: RngStream,
    critics: Critics | None = None,
) -> ScoreUpdate:
    """Regress the score network onto Monte-Carlo energy-guided targets.

    Each row draws ``tau`` uniformly in ``1..K`` and perturbs its buffer
    action to that noise level. Rows with a non-finite target are dropped.
    The energy comes from the agent's own critics unless *critics* is given.
    """
    cfg = agent.cfg
    rows = len(batch)
    tau = 1 + rng.integers(sch.K, size=rows)
    a_tau = forward_perturb(batch.actions, tau, sch, rng)
    energy = make_energy_fn(critics or agent, agent.dual, agent.variant, batch.states)
    targets = mc_score_targets_batch(energy, a_tau, sch.sigma[tau], cfg.beta, cfg.N, rng)
    keep = targets.finite
    skipped = int(rows - keep.sum())
    if skipped:
        logger.warning("skipped %d score-target rows with non-finite energies", skipped, extra={"skipped_rows": skipped})
    if not keep.any():
        return ScoreUpdate(loss=math.nan, mean_ess=math.nan, skipped=skipped)
    phi, cache = score_net_forward(agent.score_net, batch.states[keep], a_tau[keep], tau[keep])
    resid = phi - targets.values[keep]
    loss = float(np.mean(np.sum(resid * resid, axis=1)))
    grads = score_net_backward(agent.score_net, cache, 2.0 * resid / len(resid))
    adam_step(
        agent.score_net.tensors(),
        grads.tensors(),
        agent.opt["score"],
        cfg.lr,
        cfg.adam_betas,
        cfg.adam_eps,
        cfg.grad_clip,
    )
    return ScoreUpdate(loss=loss, mean_ess=float(np.mean(targets.ess[keep])), skipped=skipped)


def update_dual(agent: AgentState, batch: Batch, sch: NoiseSchedule, rng: RngStream) -> DualState:
    """Projected ascent on the cost-critic mean at fresh policy actions."""
    actions = sample_action(agent, batch.states, sch, rng, "train")
    e = agent.energy_eval(batch.states, actions, with_grad=False)
    agent.dual = dual_update(agent.dual, float(np.mean(e.qc)))
    return agent.dual


def update_targets(agent: AgentState) -> None:
    kappa = agent.cfg.polyak
    polyak_update(agent.q1_target, agent.q1, kappa)
    polyak_update(agent.q2_target, agent.q2, kappa)
    for target, online in zip(agent.cost_target.members, agent.cost.members, strict=True):
        polyak_update(target, online, kappa)


@dataclass(frozen=True)
class StepStats:
    q_loss: float
    qc_loss: float
    score_loss: float
    mean_ess: float


def gradient_step(agent: AgentState, buffer: ReplayBuffer, sch: NoiseSchedule, streams: TrainStreams) -> StepStats:
    batch = sample_batch(buffer, agent.cfg.batch_size, streams.batch)
    targets = critic_targets(batch, agent, sch, streams.update)
    losses = update_critics(agent, batch, targets)
    score = update_score_net(agent, batch, sch, streams.update)
    update_dual(agent, batch, sch, streams.update)
    agent.grad_steps += 1
    if agent.grad_steps % agent.cfg.target_update_every == 0:
        update_targets(agent)
    logger.debug(
        "gradient step %d: q_loss=%.4g qc_loss=%.4g score_loss=%.4g lambda=%.4g",
        agent.grad_steps,
        losses.q_loss,
        losses.qc_loss,
        score.loss,
        agent.dual.lambda_,
    )
    return StepStats(q_loss=losses.q_loss, qc_loss=losses.qc_loss, score_loss=score.loss, mean_ess=score.mean_ess)


@dataclass
class EnvSession:
    """A live episode carried across epochs."""

    spec: EnvSpec
    state: EnvState | None = None
    episode_return: float = 0.0

    def current(self, rng: RngStream) -> EnvState:
        if self.state is None or self.state.done:
            self.state = reset(self.spec, rng)
            self.episode_return = 0.0
        return self.state


def _mean_or_nan(values) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def train_epoch(
    agent: AgentState,
    env: EnvSession,
    buffer: ReplayBuffer,
    sch: NoiseSchedule,
    streams: TrainStreams,
    epoch: int,
    max_steps: int | None = None,
) -> EpochLogRow:
    """Collect ``steps_per_epoch`` transitions, then run ``train_repeat`` gradient steps.

    Actions are uniform random until ``warmup_steps`` environment steps
    have been taken; gradient steps start once warm-up is over and the
    buffer holds a full batch. Eval columns of the returned row are NaN.
    """
    cfg = agent.cfg
    n_steps = cfg.steps_per_epoch if max_steps is None else min(cfg.steps_per_epoch, max_steps)
    returns = []
    costs = []
    for _ in range(n_steps):
        st = env.current(streams.env)
        if agent.env_steps < cfg.warmup_steps:
            action = streams.action.uniform(-1.0, 1.0, size=agent.d_a)
        else:
            action = sample_action(agent, st.s, sch, streams.action, "train")
        nxt, reward, cost, done = step(env.spec, st, action)
        push_transition(
            buffer,
            Transition(
                state=st.s,
                action=np.clip(action, -1.0, 1.0),
                reward=reward,
                cost=cost,
                next_state=nxt.s,
                done=nxt.reached_goal,
            ),
        )
        env.state = nxt
        env.episode_return += reward
        agent.env_steps += 1
        if done:
            agent.episodes += 1
            returns.append(env.episode_return)
            costs.append(nxt.episode_cost)

    stats: list[StepStats] = []
    if agent.env_steps >= cfg.warmup_steps and len(buffer) >= cfg.batch_size:
        stats = [gradient_step(agent, buffer, sch, streams) for _ in range(cfg.train_repeat)]

    return EpochLogRow(
        epoch=epoch,
        env_steps=agent.env_steps,
        train_return=_mean_or_nan(returns),
        train_episode_cost=_mean_or_nan(costs),
        eval_return=math.nan,
        eval_episode_cost=math.nan,
        lambda_=agent.dual.lambda_,
        score_loss=_mean_or_nan([s.score_loss for s in stats]),
        q_loss=_mean_or_nan([s.q_loss for s in stats]),
        qc_loss=_mean_or_nan([s.qc_loss for s in stats]),
        mean_ess=_mean_or_nan([s.mean_ess for s in stats]),
    )


@dataclass(frozen=True)
class EvalResult:
    mean_return: float
    sd_return: float
    mean_cost: float
    sd_cost: float
    episodes: int


def evaluate_policy(agent: AgentState, spec: EnvSpec, sch: NoiseSchedule, episodes: int, rng: RngStream) -> EvalResult:
    """Run *episodes* eval-mode episodes in lock-step, one batched sampler call per step."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    states = [reset(spec, rng) for _ in range(episodes)]
    returns = np.zeros(episodes)
    while True:
        active = [i for i, st in enumerate(states) if not st.done]
        if not active:
            break
        actions = sample_action(agent, np.stack([states[i].s for i in active]), sch, rng, "eval")
        for i, action in zip(active, actions, strict=True):
            states[i], reward, _cost, _done = step(spec, states[i], action)
            returns[i] += reward
    costs = np.array([st.episode_cost for st in states])
    return EvalResult(
        mean_return=float(returns.mean()),
        sd_return=float(returns.std()),
        mean_cost=float(costs.mean()),
        sd_cost=float(costs.std()),
        episodes=episodes,
    )


def env_spec_for(run_cfg: RunConfig) -> EnvSpec:
    return make_env_spec(run_cfg.env.name, **run_cfg.env.overrides())


def checkpoint_metadata(agent: AgentState, run_cfg: RunConfig, buffer: ReplayBuffer | None = None) -> dict:
    meta = {
        "run_config": run_cfg.model_dump(mode="json"),
        "variant": str(agent.variant),
        "dual": asdict(agent.dual),
        "env_steps": agent.env_steps,
        "grad_steps": agent.grad_steps,
        "episodes": agent.episodes,
    }
    if buffer is not None:
        meta["buffer"] = buffer.metadata()
    return meta


def save_agent(path: str | Path, agent: AgentState, run_cfg: RunConfig, buffer: ReplayBuffer | None = None) -> Path:
    return save_checkpoint(path, agent.named_tensors(), checkpoint_metadata(agent, run_cfg, buffer))


@dataclass
class LoadedAgent:
    agent: AgentState
    run_cfg: RunConfig
    spec: EnvSpec
    metadata: dict


def load_agent(path: str | Path) -> LoadedAgent:
    """Rebuild an agent from a checkpoint written by :func:`save_agent`.

    Raises:
        CheckpointError: If the checkpoint is missing, corrupt or does not
            match the network shapes its run config describes.
    """
    tensors, meta = load_checkpoint(path)
    try:
        run_cfg = parse_run_config(meta["run_config"])
        variant = Variant(meta["variant"])
        dual = DualState(**meta["dual"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Checkpoint metadata is incomplete: {e}") from e
    spec = env_spec_for(run_cfg)
    agent = init_agent(run_cfg.train, spec, variant)
    for name, arr in agent.named_tensors().items():
        if name not in tensors:
            raise CheckpointError(f"Checkpoint lacks tensor {name}")
        if tensors[name].shape != arr.shape:
            raise CheckpointError(f"Tensor {name} has shape {tensors[name].shape}, expected {arr.shape}")
        arr[...] = tensors[name]
    agent.dual = dual
    agent.env_steps = meta.get("env_steps", 0)
    agent.grad_steps = meta.get("grad_steps", 0)
    agent.episodes = meta.get("episodes", 0)
    return LoadedAgent(agent=agent, run_cfg=run_cfg, spec=spec, metadata=meta)


@dataclass
class TrainingRun:
    rows: list[EpochLogRow]
    agent: AgentState
    out_dir: Path
    log_path: Path
    checkpoint: Path


def run_training(run_cfg: RunConfig, out_dir: str | Path | None = None, variant: Variant | None = None) -> TrainingRun:
    """Train until ``total_env_steps``, writing the epoch log and checkpoints under *out_dir*."""
    variant = Variant(variant or run_cfg.variant)
    if variant != run_cfg.variant:
        run_cfg = run_cfg.model_copy(update={"variant": variant})
    out = Path(out_dir or run_cfg.output_dir or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(dump_run_config(run_cfg), encoding="utf-8")
    log_path = write_header(out / LOG_FILE)

    cfg = run_cfg.train
    spec = env_spec_for(run_cfg)
    sch = build_schedule(cfg.K, cfg.sigma_min, cfg.sigma_max)
    agent = init_agent(cfg, spec, variant)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    streams = TrainStreams.from_seed(cfg.seed)
    session = EnvSession(spec)
    logger.info(
        "training %s on %s for %d env steps (seed %d)",
        variant,
        spec.name,
        cfg.total_env_steps,
        cfg.seed,
        extra={"out_dir": str(out)},
    )

    rows = []
    epoch = 0
    while agent.env_steps < cfg.total_env_steps:
        epoch += 1
        row = train_epoch(agent, session, buffer, sch, streams, epoch, cfg.total_env_steps - agent.env_steps)
        if epoch % run_cfg.eval_every == 0:
            result = evaluate_policy(agent, spec, sch, run_cfg.eval_episodes, streams.eval)
            row = replace(row, eval_return=result.mean_return, eval_episode_cost=result.mean_cost)
        write_log_row(log_path, row)
        rows.append(row)
        logger.info("epoch %d done", epoch, extra={"epoch_row": asdict(row)})
        if epoch % run_cfg.checkpoint_every == 0:
            save_agent(out / f"epoch_{epoch:05d}", agent, run_cfg, buffer)

    checkpoint = save_agent(out / FINAL_CHECKPOINT, agent, run_cfg, buffer)
    return TrainingRun(rows=rows, agent=agent, out_dir=out, log_path=log_path, checkpoint=checkpoint)
