"""Scenario runner and evaluation metrics for the three controllers."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .demand import APPROACHES, DemandSchedule
from .dqn import greedy_action
from .env import EnvConfig, SignalEnv
from .neural import CheckpointError, DenseNet, forward, load_checkpoint
from .signals import ActuatedController, PretimedController, TimingPlan
from .sim import SimConfig, Simulation

CONTROLLERS = ("pretimed", "actuated", "dqn")
LABELS = {"pretimed": "pre-timed", "actuated": "actuated", "dqn": "DQN"}
COUNTDOWN_RANGE = (-60.0, 50.0)


@dataclass
class ScenarioSpec:
    name: str
    demand: DemandSchedule
    controller: str
    duration: float
    seed: int = 0
    checkpoint: str | os.PathLike | DenseNet | None = None
    sim_config: SimConfig = field(default_factory=SimConfig)
    plan: TimingPlan = field(default_factory=TimingPlan)
    env_config: EnvConfig = field(default_factory=EnvConfig)

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if (self.checkpoint is not None) != (self.controller == "dqn"):
            raise ValueError("a checkpoint is required for, and only for, the DQN controller")


@dataclass
class MetricsRecord:
    time_s: np.ndarray
    queue_ns: np.ndarray
    queue_we: np.ndarray
    countdowns: list[float]
    discharged: dict[str, int]
    terminations: list = field(default_factory=list)

    @property
    def queue_total(self) -> np.ndarray:
        return self.queue_ns + self.queue_we

    def write_metrics_csv(self, path) -> None:
        _write_rows(path, ["time_s", "queue_NS", "queue_WE"],
                    ([_num(t), int(a), int(b)]
                     for t, a, b in zip(self.time_s, self.queue_ns, self.queue_we)))


def _num(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _write_rows(path, header, rows) -> None:
    """Write a CSV atomically: temp file in the same directory, then rename."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def resolve_checkpoint(checkpoint, env_config: EnvConfig) -> DenseNet:
    net = checkpoint if isinstance(checkpoint, DenseNet) else load_checkpoint(checkpoint)
    expected = 10 if env_config.phase_indicator else 8
    if net.sizes[0] != expected or net.sizes[-1] != 2:
        raise CheckpointError(
            f"checkpoint architecture {net.sizes} does not match observation dimension "
            f"{expected} with 2 actions")
    return net


def checkpoint_env_config(net: DenseNet, base: EnvConfig) -> EnvConfig:
    """Honour the observation layout recorded in the checkpoint, if any."""
    flag = net.meta.get("phase_indicator")
    if flag is None:
        return base
    return replace(base, phase_indicator=flag == "1")


def run_scenario(spec: ScenarioSpec) -> MetricsRecord:
    sim_config = replace(spec.sim_config, rng_seed=spec.seed)
    if spec.controller == "dqn":
        net = spec.checkpoint if isinstance(spec.checkpoint, DenseNet) \
            else load_checkpoint(spec.checkpoint)
        env_config = replace(checkpoint_env_config(net, spec.env_config),
                             episode_length=spec.duration)
        net = resolve_checkpoint(net, env_config)
        env = SignalEnv(sim_config, spec.plan, env_config=env_config, demand=spec.demand)
        obs = env.reset()
        while not env.terminal:
            obs = env.step(greedy_action(forward(net, obs.normalized()))).observation
        sim = env.sim
    else:
        cls = PretimedController if spec.controller == "pretimed" else ActuatedController
        ctl = cls(spec.plan)
        sim = Simulation(sim_config, spec.demand, spec.plan, max_timer_gated=ctl.max_timer_gated)
        sim.run(ctl, spec.duration)
    return _collect(sim, spec.duration)


def _collect(sim: Simulation, duration: float) -> MetricsRecord:
    series = np.array(sim.queue_series, dtype=float).reshape(-1, 3)
    series = series[series[:, 0] <= duration + 1e-9]
    terms = [t for t in sim.terminations if t.time < duration]
    return MetricsRecord(series[:, 0], series[:, 1].astype(int), series[:, 2].astype(int),
                         [t.maxout_countdown for t in terms],
                         dict(sim.discharged_by_lane), terms)


def maxout_histogram(samples, bin_width: float = 5.0) -> list[tuple[float, float, int]]:
    """Count countdown samples in bins centred on multiples of ``bin_width``.

    Bins span [-60, 50] and widen outward if a sample falls beyond it, so
    every sample is counted exactly once.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    samples = np.asarray(list(samples), dtype=float)
    if samples.size == 0:
        return []
    lo_c = math.floor(min(COUNTDOWN_RANGE[0], samples.min()) / bin_width + 0.5)
    hi_c = math.floor(max(COUNTDOWN_RANGE[1], samples.max()) / bin_width + 0.5)
    idx = np.floor(samples / bin_width + 0.5).astype(int) - lo_c
    counts = np.bincount(idx, minlength=hi_c - lo_c + 1)
    return [((c + lo_c) * bin_width - bin_width / 2, (c + lo_c) * bin_width + bin_width / 2,
             int(n)) for c, n in enumerate(counts)]


def write_histogram_csv(hist, path) -> None:
    _write_rows(path, ["bin_low", "bin_high", "count"],
                ([_num(lo), _num(hi), n] for lo, hi, n in hist))


def moving_average(series, window: int = 100) -> np.ndarray:
    """Trailing mean over the last ``min(window, i + 1)`` samples."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x.copy()
    csum = np.concatenate(([0.0], np.cumsum(x)))
    i = np.arange(1, x.size + 1)
    start = np.maximum(i - window, 0)
    out = (csum[i] - csum[start]) / (i - start)
    # cumulative sums can drift by an ulp; keep within the data range
    return np.clip(out, x.min(), x.max())


@dataclass
class ComparisonSummary:
    rows: list[dict]
    means: dict[str, dict[str, float]]
    verdicts: dict[str, str]
    per_seed_total: dict[str, list[float]]

    def wins(self, better: str, worse: str, strict: bool = False) -> int:
        """Seeds on which ``better`` has the lower (or equal) mean total queue."""
        a, b = self.per_seed_total[better], self.per_seed_total[worse]
        return sum((x < y) if strict else (x <= y) for x, y in zip(a, b))

    def write_csv(self, path) -> None:
        _write_rows(path, ["controller", "direction", "mean_queue", "max_queue", "seed"],
                    ([r["controller"], r["direction"], repr(r["mean_queue"]),
                      _num(r["max_queue"]), r["seed"]] for r in self.rows))


def ordering_verdict(values: dict[str, float]) -> str:
    """E.g. ``'DQN ≤ actuated ≤ pre-timed'``, or ``'tie'`` if all are equal."""
    if len(set(values.values())) == 1:
        return "tie"
    order = sorted(values, key=lambda k: (values[k], CONTROLLERS.index(k)))
    parts = [LABELS[order[0]]]
    for prev, cur in zip(order, order[1:]):
        parts.append(("= " if values[prev] == values[cur] else "≤ ") + LABELS[cur])
    return " ".join(parts)


def _run(spec: ScenarioSpec) -> tuple[str, int, MetricsRecord]:
    return spec.controller, spec.seed, run_scenario(spec)


def compare_controllers(demand: DemandSchedule, duration: float, checkpoint=None,
                        seeds=(0,), workers: int = 1, controllers=None,
                        **spec_kwargs) -> ComparisonSummary:
    """Run every controller on every seed and summarise queue statistics."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    if controllers is None:
        controllers = CONTROLLERS if checkpoint is not None else CONTROLLERS[:2]
    if "dqn" in controllers:
        net = checkpoint if isinstance(checkpoint, DenseNet) else load_checkpoint(checkpoint)
        resolve_checkpoint(net, checkpoint_env_config(net, spec_kwargs.get("env_config",
                                                                            EnvConfig())))
        checkpoint = net
    specs = [ScenarioSpec(f"{c}-{s}", demand, c, duration, s,
                          checkpoint if c == "dqn" else None, **spec_kwargs)
             for c in controllers for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run, specs))
    else:
        results = [_run(s) for s in specs]
    return summarize(results, controllers)


def summarize(results, controllers=None) -> ComparisonSummary:
    """Summary over ``(controller, seed, MetricsRecord)`` triples."""
    results = list(results)
    if controllers is None:
        controllers = [c for c in CONTROLLERS if any(r[0] == c for r in results)]
    rows = []
    per_seed_total = {c: [] for c in controllers}
    sums = {c: {"NS": [], "WE": [], "total": []} for c in controllers}
    for ctl, seed, rec in results:
        for direction, q in (("NS", rec.queue_ns), ("WE", rec.queue_we)):
            mean = float(q.mean()) if q.size else 0.0
            rows.append({"controller": ctl, "direction": direction, "mean_queue": mean,
                         "max_queue": int(q.max()) if q.size else 0, "seed": seed})
            sums[ctl][direction].append(mean)
        total = float(rec.queue_total.mean()) if rec.queue_total.size else 0.0
        sums[ctl]["total"].append(total)
        per_seed_total[ctl].append(total)
    means = {c: {d: float(np.mean(v)) for d, v in dirs.items()} for c, dirs in sums.items()}
    verdicts = {d: ordering_verdict({c: means[c][d] for c in controllers})
                for d in ("NS", "WE", "total")}
    return ComparisonSummary(rows, means, verdicts, per_seed_total)


def write_record_outputs(record: MetricsRecord, out_dir, prefix: str = "",
                         bin_width: float = 5.0) -> list[str]:
    """Metrics, histogram and discharge CSVs for one scenario run."""
    os.makedirs(out_dir, exist_ok=True)
    metrics = os.path.join(out_dir, f"{prefix}metrics.csv")
    hist = os.path.join(out_dir, f"{prefix}histogram.csv")
    record.write_metrics_csv(metrics)
    write_histogram_csv(maxout_histogram(record.countdowns, bin_width), hist)
    return [metrics, hist]


def discharge_row(record: MetricsRecord) -> list[int]:
    return [record.discharged[a] for a in APPROACHES]
