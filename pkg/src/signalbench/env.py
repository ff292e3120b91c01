"""Agent-facing MDP around the simulator: observations, keep/change steps, reward."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .demand import APPROACHES, DemandSchedule, sample_training_demand
from .signals import (
    Action,
    Cause,
    ControllerDecision,
    KEEP,
    TimingPlan,
)
from .sim import SimConfig, Simulation

__all__ = [
    "Observation", "RewardWeights", "RewardInputs", "StepResult", "EnvConfig",
    "SignalEnv", "build_observation", "compute_penalty", "compute_reward",
    "compute_residual_queue", "sample_training_demand",
]

log = logging.getLogger(__name__)

KEEP_DURATION = 3.0
T_SCALE = 60.0
L_SCALE = 20.0
NORM_CLAMP = 5.0


@dataclass(frozen=True)
class Observation:
    """Per-lane average travel time and queue length, lanes ordered N, S, W, E."""

    t_avg: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    queue: tuple[int, int, int, int] = (0, 0, 0, 0)
    phase: tuple[float, float] | None = None

    def as_array(self) -> np.ndarray:
        parts = [*self.t_avg, *self.queue]
        if self.phase is not None:
            parts.extend(self.phase)
        return np.array(parts, dtype=np.float64)

    def normalized(self) -> np.ndarray:
        out = self.as_array()
        out[:4] /= T_SCALE
        out[4:8] /= L_SCALE
        return np.clip(out, 0.0, NORM_CLAMP)

    @property
    def dim(self) -> int:
        return 8 if self.phase is None else 10


@dataclass(frozen=True)
class RewardWeights:
    w1: float = -1.0
    w2: float = -0.5
    w3: float = 2.0
    w4: float = -1.0
    C: float = 0.9

    def __post_init__(self):
        if not 0 < self.C <= 1:
            raise ValueError("C must be in (0, 1]")


@dataclass(frozen=True)
class RewardInputs:
    L_sum: float = 0.0
    D_sum: float = 0.0
    F_sum: float = 0.0
    S_sum: float = 0.0
    counter: int = 0

    def __post_init__(self):
        if min(self.L_sum, self.D_sum, self.F_sum, self.S_sum, self.counter) < 0:
            raise ValueError("reward inputs must be non-negative")


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    elapsed: float
    terminal: bool
    inputs: RewardInputs = field(default_factory=RewardInputs)
    action: Action = Action.KEEP
    note: str = ""


def compute_penalty(counter: int, C: float) -> float:
    if counter < 0:
        raise ValueError("counter must be >= 0")
    return C ** counter


def compute_reward(inputs: RewardInputs, weights: RewardWeights = RewardWeights()) -> float:
    return (weights.w1 * inputs.L_sum
            + weights.w2 * inputs.D_sum
            + weights.w3 * inputs.F_sum * compute_penalty(inputs.counter, weights.C)
            + weights.w4 * inputs.S_sum)


def compute_residual_queue(previous: set, current: set) -> int:
    """Vehicles queued at the previous observation and still queued now."""
    return len(set(previous) & set(current))


def build_observation(queue_counts, travel_times, previous: Observation | None = None,
                      phase: tuple[float, float] | None = None) -> Observation:
    """Assemble an observation from detector queues and fresh travel times.

    ``travel_times`` maps each approach to the advance-to-stop-bar times of
    vehicles that completed the crossing during the last step; a lane with
    none keeps its previous average.
    """
    prev = previous.t_avg if previous is not None else (0.0,) * 4
    t_avg = tuple(
        float(np.mean(travel_times[a])) if travel_times.get(a) else prev[i]
        for i, a in enumerate(APPROACHES)
    )
    if isinstance(queue_counts, dict):
        queue_counts = [queue_counts[a] for a in APPROACHES]
    return Observation(t_avg, tuple(int(q) for q in queue_counts), phase)


@dataclass(frozen=True)
class EnvConfig:
    episode_length: float = 3600.0
    keep_duration: float = KEEP_DURATION
    phase_indicator: bool = True
    green_ceiling: float = 120.0

    def __post_init__(self):
        if self.episode_length <= 0 or self.keep_duration <= 0:
            raise ValueError("episode_length and keep_duration must be positive")


class SignalEnv:
    """Keep/change control of one intersection with agent-step semantics.

    A Keep step runs ``keep_duration`` seconds of the current green.  A
    Change step runs yellow, red clearance and the opposing minimum green
    back to back, i.e. 15 s with the default timing.  The green ceiling is
    a hard limit on a single green; a Keep that would cross it is turned
    into a Change.
    """

    def __init__(self, sim_config: SimConfig | None = None, plan: TimingPlan | None = None,
                 weights: RewardWeights | None = None, env_config: EnvConfig | None = None,
                 demand: DemandSchedule | None = None, record_events: bool = False):
        self.sim_config = sim_config or SimConfig()
        self.plan = plan or TimingPlan()
        self.weights = weights or RewardWeights()
        self.config = env_config or EnvConfig()
        self.demand = demand
        self.record_events = record_events
        self.sim: Simulation | None = None
        self.trace: list[tuple] = []

    @property
    def obs_dim(self) -> int:
        return 10 if self.config.phase_indicator else 8

    def reset(self, demand: DemandSchedule | None = None, seed: int | None = None) -> Observation:
        if demand is not None:
            self.demand = demand
        if self.demand is None:
            raise ValueError("no demand schedule given")
        cfg = self.sim_config
        if seed is not None:
            from dataclasses import replace
            cfg = replace(cfg, rng_seed=seed)
        self.sim = Simulation(cfg, self.demand, self.plan, record_events=self.record_events)
        # The first green serves its minimum before the agent is consulted.
        while self.sim.phase.green_elapsed < self.plan.min_green - 1e-9:
            self.sim.tick(KEEP)
        self.counter = 0
        self.clock = self.sim.time
        self.trace = []
        self.prev_members = self.sim.queue_members()
        self.obs = self._observe(None)
        return self.obs

    @property
    def terminal(self) -> bool:
        return self.sim is not None and self.clock >= self.config.episode_length - 1e-9

    def _observe(self, previous: Observation | None) -> Observation:
        sim = self.sim
        phase = None
        if self.config.phase_indicator:
            phase = (1.0, 0.0) if sim.phase.active_group == "NS" else (0.0, 1.0)
        queues = [sim.detectors[a].queue_count for a in APPROACHES]
        return build_observation(queues, sim.drain_travel_times(), previous, phase)

    def step(self, action) -> StepResult:
        if self.sim is None:
            raise RuntimeError("call reset() before step()")
        if self.terminal:
            raise RuntimeError("episode is terminal; call reset()")
        sim = self.sim
        plan = self.plan
        action = Action.CHANGE if action in (1, Action.CHANGE, "Change") else Action.KEEP
        note = ""
        green = sim.phase.green_elapsed
        if action is Action.CHANGE and green < plan.min_green - 1e-9:
            action = Action.KEEP
            note = "change deferred: min green"
            log.debug("t=%.0f %s", sim.time, note)
        elif (action is Action.KEEP
              and green + self.config.keep_duration > self.config.green_ceiling + 1e-9):
            action = Action.CHANGE
            note = "green ceiling"
        discharged_before = sim.counters.discharged
        start = sim.time
        if action is Action.KEEP:
            if green > plan.max_green + 1e-9:
                self.counter += 1
            n_ticks = int(round(self.config.keep_duration / sim.cfg.sim_dt))
            for _ in range(n_ticks):
                sim.tick(KEEP)
        else:
            self.counter = 0
            cause = Cause.CEILING if note else Cause.AGENT_CHOICE
            sim.tick(ControllerDecision(Action.CHANGE, cause))
            while not (sim.phase.is_green and sim.phase.green_elapsed >= plan.min_green - 1e-9):
                sim.tick(KEEP)
        elapsed = sim.time - start
        self.clock += elapsed

        members = sim.queue_members()
        S_sum = sum(compute_residual_queue(self.prev_members[a], members[a]) for a in APPROACHES)
        self.prev_members = members
        inputs = RewardInputs(
            L_sum=float(sum(len(m) for m in members.values())),
            D_sum=sim.delay_ratio_sum(),
            F_sum=float(sim.counters.discharged - discharged_before),
            S_sum=float(S_sum),
            counter=self.counter,
        )
        reward = compute_reward(inputs, self.weights)
        self.obs = self._observe(self.obs)
        self.trace.append((start, action.value, elapsed, reward, inputs.L_sum, inputs.D_sum,
                           inputs.F_sum, inputs.S_sum, inputs.counter,
                           compute_penalty(inputs.counter, self.weights.C)))
        return StepResult(self.obs, reward, elapsed, self.terminal, inputs, action, note)

    def write_step_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_s", "action", "elapsed", "reward", "L_sum", "D_sum",
                             "F_sum", "S_sum", "counter", "penalty"])
            for row in self.trace:
                writer.writerow([repr(float(row[0])), row[1], *(repr(float(x)) for x in row[2:8]),
                                 row[8], repr(float(row[9]))])
