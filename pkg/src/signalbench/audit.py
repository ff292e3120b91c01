"""Invariant checks over seeded simulation runs, shared by the CLI and tests."""

from __future__ import annotations

import io

from .signals import ActuatedController, PretimedController, TimingPlan
from .sim import SimConfig, Simulation

GROUP_OF = {"N": "NS", "S": "NS", "W": "WE", "E": "WE"}


def simulate(controller_cls, demand, duration, seed, sim_config=None, plan=None,
             record_events=False, per_tick=None) -> Simulation:
    plan = plan or TimingPlan()
    ctl = controller_cls(plan)
    cfg = SimConfig(**{**(sim_config.__dict__ if sim_config else {}), "rng_seed": seed})
    sim = Simulation(cfg, demand, plan, max_timer_gated=ctl.max_timer_gated,
                     record_events=record_events)
    end = duration - 1e-9
    while sim.time < end:
        sim.tick(ctl.decide(sim.phase, sim.detectors))
        if per_tick is not None:
            per_tick(sim)
    return sim


def interval_durations(sim: Simulation) -> list[tuple[str, str, float]]:
    """(group, interval, duration) of every completed interval in the signal trace."""
    rows = sim.trace
    return [(a[1], a[2], b[0] - a[0]) for a, b in zip(rows, rows[1:])]


def timing_violations(sim: Simulation, plan: TimingPlan) -> list[str]:
    out = []
    seq = interval_durations(sim)
    follow = {"Green": "Yellow", "Yellow": "RedClearance", "RedClearance": "Green"}
    for (g1, i1, _), (g2, i2, _) in zip(seq, seq[1:]):
        if i2 != follow[i1] or (g1 == g2) != (i1 != "RedClearance"):
            out.append(f"bad sequence {g1}:{i1} -> {g2}:{i2}")
    for group, interval, dur in seq:
        if interval == "Yellow" and abs(dur - plan.yellow_time) > 1e-9:
            out.append(f"yellow of {dur} s")
        elif interval == "RedClearance" and abs(dur - plan.red_clearance) > 1e-9:
            out.append(f"red clearance of {dur} s")
        elif interval == "Green" and dur < plan.min_green - 1e-9:
            out.append(f"green of {dur} s")
    return out


def pretimed_period_violations(sim: Simulation, plan: TimingPlan) -> list[str]:
    period = 2 * (plan.max_green + plan.yellow_time + plan.red_clearance)
    starts = {row[0]: (row[1], row[2]) for row in sim.trace}
    horizon = sim.time
    return [f"t={t}: {v} vs {starts.get(t + period)}"
            for t, v in starts.items()
            if t + period < horizon and starts.get(t + period) != v]


class MaxOutBoundCheck:
    """Per tick: green held with an opposing call never exceeds max_green + dt."""

    def __init__(self, plan: TimingPlan):
        self.plan = plan
        self.onset = None
        self.green_key = None
        self.violations: list[str] = []

    def __call__(self, sim: Simulation) -> None:
        phase = sim.phase
        key = (sim.terminations[-1].time if sim.terminations else None, phase.active_group)
        if not phase.is_green:
            self.onset = None
            return
        if key != self.green_key:
            self.green_key = key
            self.onset = None
        if sim.opposing_call():
            if self.onset is None:
                # the call was raised during the tick that just ended
                self.onset = sim.time - sim.cfg.sim_dt
            held = sim.time - max(self.onset, sim.time - phase.green_elapsed)
            if held > self.plan.max_green + sim.cfg.sim_dt + 1e-9:
                self.violations.append(f"t={sim.time}: green held {held} s against a call")


class ConservationCheck:
    def __init__(self):
        self.failures = 0
        self.ticks = 0

    def __call__(self, sim: Simulation) -> None:
        self.ticks += 1
        if not sim.audit():
            self.failures += 1


def red_violations(sim: Simulation) -> list[str]:
    out = []
    for _, event, vid, lane, _, phase in sim.events or []:
        if event != "discharge":
            continue
        group, interval = phase.split(":")
        if group != GROUP_OF[lane] or interval not in ("Green", "Yellow"):
            out.append(f"vehicle {vid} crossed on {phase}")
    return out


def event_log_bytes(sim: Simulation) -> bytes:
    buf = io.StringIO()
    for row in sim.events or []:
        buf.write(",".join(map(str, row)) + "\n")
    return buf.getvalue().encode()


def run_audit(cfg, demand, duration, seed) -> list[tuple[str, bool, str]]:
    """All invariant suites for both baseline controllers on one seeded run."""
    results = []
    plan = cfg.plan
    for cls in (PretimedController, ActuatedController):
        name = cls.name
        cons = ConservationCheck()
        bound = MaxOutBoundCheck(plan)

        def per_tick(sim, cons=cons, bound=bound):
            cons(sim)
            bound(sim)

        sim = simulate(cls, demand, duration, seed, cfg.sim, plan, True, per_tick)
        twin = simulate(cls, demand, duration, seed, cfg.sim, plan, True)
        timing = timing_violations(sim, plan)
        results.append((f"{name} conservation", cons.failures == 0,
                        f"{cons.failures} failing ticks of {cons.ticks}"))
        results.append((f"{name} phase timing", not timing, "; ".join(timing[:3])))
        results.append((f"{name} red compliance", not red_violations(sim), ""))
        results.append((f"{name} determinism", event_log_bytes(sim) == event_log_bytes(twin), ""))
        if cls is PretimedController:
            per = pretimed_period_violations(sim, plan)
            results.append(("pretimed period", not per, "; ".join(per[:3])))
            results.append(("pretimed countdowns all zero",
                            all(t.maxout_countdown == 0 for t in sim.terminations), ""))
        else:
            results.append(("actuated max-out bound", not bound.violations,
                             "; ".join(bound.violations[:3])))
            results.append(("actuated countdowns in [0, 50]",
                            all(0 <= t.maxout_countdown <= plan.maxout_allowance
                                for t in sim.terminations), ""))
    return results
