"""Deep Q-learning: replay buffer, epsilon-greedy, Bellman targets, training loop."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .demand import APPROACHES, sample_training_demand
from .env import EnvConfig, RewardWeights, SignalEnv
from .neural import (
    LOSSES,
    AdamState,
    DenseNet,
    adam_update,
    backward,
    forward,
    save_checkpoint,
)
from .signals import TimingPlan
from .sim import SimConfig

log = logging.getLogger(__name__)

KEEP, CHANGE = 0, 1


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter."""


class Transition(NamedTuple):
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class DqnConfig:
    episodes: int = 500
    gamma: float = 0.99
    minibatch: int = 16
    eps_start: float = 1.0
    eps_end: float = 0.005
    eps_decay_steps: int = 20000
    replay_start_size: int = 15000
    target_update_interval: int = 2000
    replay_capacity: int = 100000
    learning_rate: float = 1e-3
    loss: str = "huber"
    huber_delta: float = 1.0
    reward_scale: float = 0.001
    hidden: tuple[int, ...] = (32, 16)
    seed: int = 0

    def __post_init__(self):
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        errors = []
        if not 0 <= self.gamma < 1:
            errors.append("gamma must be in [0,1)")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            errors.append("epsilon must satisfy 0 <= eps_end <= eps_start <= 1")
        if self.replay_start_size > self.replay_capacity:
            errors.append("replay_start_size must not exceed replay_capacity")
        if self.minibatch < 1 or self.minibatch > self.replay_capacity:
            errors.append("minibatch must be in [1, replay_capacity]")
        if self.episodes < 1:
            errors.append("episodes must be >= 1")
        if self.eps_decay_steps < 1 or self.target_update_interval < 1:
            errors.append("eps_decay_steps and target_update_interval must be >= 1")
        if self.learning_rate <= 0 or self.reward_scale <= 0:
            errors.append("learning_rate and reward_scale must be > 0")
        if self.loss not in LOSSES:
            errors.append(f"loss must be one of {sorted(LOSSES)}")
        return errors


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored in preallocated arrays."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.s_next = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a: int, r: float, s_next, terminal: bool) -> None:
        if not math.isfinite(r):
            raise ValueError("non-finite reward")
        i = self.cursor
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.terminal[i] = terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __getitem__(self, k: int) -> Transition:
        """k-th oldest retained transition."""
        if not 0 <= k < self.size:
            raise IndexError(k)
        start = self.cursor if self.size == self.capacity else 0
        i = (start + k) % self.capacity
        return Transition(self.s[i].copy(), int(self.a[i]), float(self.r[i]),
                          self.s_next[i].copy(), bool(self.terminal[i]))

    def sample(self, batch: int, rng: np.random.Generator):
        if self.size < batch:
            raise ValueError("not enough transitions to sample")
        idx = rng.integers(0, self.size, size=batch)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx]


def epsilon_at(step: int, cfg: DqnConfig) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    if step >= cfg.eps_decay_steps:
        return cfg.eps_end
    frac = step / cfg.eps_decay_steps
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


def greedy_action(q: np.ndarray) -> int:
    return CHANGE if q[CHANGE] > q[KEEP] else KEEP


def select_action(net: DenseNet, obs, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy on Q(obs, .); ``obs`` must already be normalized."""
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must be in [0,1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(0, 2))
    return greedy_action(forward(net, obs))


def td_target(rewards, next_obs, terminal, target_net: DenseNet, gamma: float) -> np.ndarray:
    """Bellman targets ``r + gamma * max_a' Q_target(s', a')``, ``r`` when terminal."""
    rewards = np.asarray(rewards, dtype=np.float64)
    terminal = np.asarray(terminal, dtype=bool)
    y = rewards.copy()
    live = ~terminal
    if gamma and np.any(live):
        q_next = forward(target_net, np.asarray(next_obs)[live])
        y[live] += gamma * q_next.max(axis=1)
    return y


class Learner:
    """Online/target network pair with their optimizer and sampling stream."""

    def __init__(self, online: DenseNet, cfg: DqnConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.online = online
        self.target = online.copy()
        self.adam = AdamState(online.params(), learning_rate=cfg.learning_rate)
        self.rng = rng
        self.loss_fn = LOSSES[cfg.loss]
        self.updates = 0
        self.skipped = 0


def train_step(buffer: ReplayBuffer, learner: Learner, global_step: int) -> float | None:
    """One minibatch update once the buffer is warm; returns the mean loss.

    Returns ``None`` (and performs no update) while the buffer holds fewer
    than ``replay_start_size`` transitions.  The target network is synced
    whenever ``global_step`` is a multiple of ``target_update_interval``.
    """
    cfg = learner.cfg
    if len(buffer) < max(cfg.replay_start_size, cfg.minibatch):
        learner.skipped += 1
        return None
    s, a, r, s_next, term = buffer.sample(cfg.minibatch, learner.rng)
    y = td_target(r, s_next, term, learner.target, cfg.gamma)
    q, cache = forward(learner.online, s, return_cache=True)
    rows = np.arange(len(a))
    err = q[rows, a] - y
    loss, dloss = learner.loss_fn(err, cfg.huber_delta)
    grad_out = np.zeros_like(q)
    grad_out[rows, a] = dloss / len(a)
    grads = backward(learner.online, s, grad_out, cache)
    adam_update(learner.online.params(), grads, learner.adam)
    learner.updates += 1
    mean_loss = float(loss.mean())
    if not math.isfinite(mean_loss):
        raise DivergenceError(f"non-finite loss at global step {global_step}")
    if global_step % cfg.target_update_interval == 0:
        learner.target.load_params(learner.online)
    return mean_loss


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    ret: float
    mean_loss: float
    epsilon: float
    demand: tuple[float, float, float, float]


@dataclass
class TrainingResult:
    net: DenseNet
    log: list[EpisodeLog]
    global_steps: int


def agent_meta(env_config: EnvConfig) -> dict[str, str]:
    return {"phase_indicator": str(int(env_config.phase_indicator)),
            "observation": "t_avg/60,queue/20,clamp0-5"}


def run_training(cfg: DqnConfig, sim_config: SimConfig | None = None,
                 plan: TimingPlan | None = None, weights: RewardWeights | None = None,
                 env_config: EnvConfig | None = None, out_dir=None,
                 progress=None) -> TrainingResult:
    """Train a Q-network on randomly sampled constant demands.

    Writes ``training_log.csv`` and ``checkpoint.txt`` under ``out_dir`` if
    given.  ``progress`` is called with each finished :class:`EpisodeLog`.
    """
    sim_config = sim_config or SimConfig()
    env_config = env_config or EnvConfig()
    env = SignalEnv(sim_config, plan, weights, env_config)
    seeds = np.random.SeedSequence(cfg.seed)
    init_ss, act_ss, replay_ss, demand_ss, sim_ss = seeds.spawn(5)
    online = DenseNet.init((env.obs_dim, *cfg.hidden, 2), np.random.default_rng(init_ss))
    online.meta.update(agent_meta(env_config))
    learner = Learner(online, cfg, np.random.default_rng(replay_ss))
    act_rng = np.random.default_rng(act_ss)
    demand_rng = np.random.default_rng(demand_ss)
    sim_seeds = sim_ss.generate_state(cfg.episodes, dtype=np.uint64)
    buffer = ReplayBuffer(cfg.replay_capacity, env.obs_dim)

    history: list[EpisodeLog] = []
    global_step = 0
    for episode in range(cfg.episodes):
        demand = sample_training_demand(demand_rng)
        obs = env.reset(demand, seed=int(sim_seeds[episode])).normalized()
        ret = 0.0
        losses = []
        steps = 0
        eps = epsilon_at(global_step, cfg)
        while not env.terminal:
            eps = epsilon_at(global_step, cfg)
            action = select_action(learner.online, obs, eps, act_rng)
            result = env.step(action)
            nxt = result.observation.normalized()
            ret += result.reward
            buffer.add(obs, action, result.reward * cfg.reward_scale, nxt, result.terminal)
            obs = nxt
            global_step += 1
            steps += 1
            try:
                loss = train_step(buffer, learner, global_step)
            except DivergenceError:
                log.error("divergence in episode %d at global step %d", episode, global_step)
                raise
            if loss is not None:
                losses.append(loss)
        if not learner.online.all_finite():
            raise DivergenceError(f"non-finite parameters after episode {episode}")
        entry = EpisodeLog(episode, steps, ret, float(np.mean(losses)) if losses else math.nan,
                           eps, demand.entries[0][1])
        history.append(entry)
        if progress is not None:
            progress(entry)

    result = TrainingResult(learner.online, history, global_step)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_training_log(history, os.path.join(out_dir, "training_log.csv"), cfg)
        save_checkpoint(learner.online, os.path.join(out_dir, "checkpoint.txt"))
    return result


def write_training_log(history: list[EpisodeLog], path, cfg: DqnConfig) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        for f in fields(cfg):
            fh.write(f"# {f.name}={getattr(cfg, f.name)}\n")
        writer = csv.writer(fh)
        writer.writerow(["episode", "steps", "return", "mean_loss", "epsilon_end_of_episode",
                         *(f"demand_{a}" for a in APPROACHES)])
        for e in history:
            writer.writerow([e.episode, e.steps, repr(e.ret), repr(e.mean_loss), repr(e.epsilon),
                             *(repr(float(d)) for d in e.demand)])
    os.replace(tmp, path)


def read_training_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(rows))
