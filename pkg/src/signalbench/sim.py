"""Fixed-timestep point-vehicle simulation of a one-lane-per-approach intersection.

Vehicles cruise at the free-flow speed toward the stop bar, stop behind
their leader (at jam spacing) or at a non-green stop bar, and discharge
across the stop bar no faster than one per saturation headway.  A queue
standing at the stop bar when the green starts waits an extra start-up
lost time before the first departure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .demand import APPROACHES, DemandSchedule
from .signals import (
    GROUP_LANES,
    KEEP,
    LANE_GROUP,
    Action,
    ControllerDecision,
    DetectorSnapshot,
    Interval,
    PhaseState,
    TimingPlan,
    apply_decision,
    elapse,
    opposing,
)

STOPPED_SPEED = 0.1  # m/s
YELLOW_DECEL = 3.0  # m/s^2, comfortable stopping deceleration
_EPS = 1e-9


@dataclass(frozen=True)
class SimConfig:
    lane_length: float = 500.0
    free_flow_speed: float = 56.0 / 3.6
    advance_detector_pos: float = 137.9
    advance_detector_len: float = 55.0
    stop_bar_detector_len: float = 2.0
    jam_spacing: float = 6.11
    saturation_headway: float = 2.0
    startup_lost_time: float = 2.0
    sim_dt: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        errors = []
        if self.sim_dt <= 0:
            errors.append("sim_dt must be > 0")
        if self.free_flow_speed <= 0:
            errors.append("free_flow_speed must be > 0")
        if self.advance_detector_pos - self.advance_detector_len < 0:
            errors.append("advance detector zone must lie within the lane")
        if self.advance_detector_pos > self.lane_length:
            errors.append("advance_detector_pos must not exceed lane_length")
        if self.jam_spacing <= 0 or self.jam_spacing * 9 > self.advance_detector_len:
            errors.append("jam_spacing must be > 0 and fit 9 vehicles in the advance detector")
        if self.saturation_headway <= 0 or self.startup_lost_time < 0:
            errors.append("saturation_headway must be > 0 and startup_lost_time >= 0")
        if not 0 <= self.rng_seed < 2**64:
            errors.append("rng_seed must be a 64-bit unsigned integer")
        return errors

    @property
    def desired_travel_time(self) -> float:
        """Free-flow time from the advance detector to the stop bar."""
        return self.advance_detector_pos / self.free_flow_speed


class Vehicle:
    __slots__ = ("id", "lane", "position", "speed", "advance_cross_time",
                 "stopbar_cross_time", "spawn_time")

    def __init__(self, id, lane, position, speed, spawn_time,
                 advance_cross_time=None, stopbar_cross_time=None):
        self.id = id
        self.lane = lane
        self.position = position
        self.speed = speed
        self.spawn_time = spawn_time
        self.advance_cross_time = advance_cross_time
        self.stopbar_cross_time = stopbar_cross_time

    @property
    def travel_time(self) -> float | None:
        if self.advance_cross_time is None or self.stopbar_cross_time is None:
            return None
        return self.stopbar_cross_time - self.advance_cross_time

    def __repr__(self):
        return (f"Vehicle(id={self.id}, lane={self.lane!r}, position={self.position:.3f}, "
                f"speed={self.speed:.3f})")


@dataclass
class LaneState:
    """One approach lane; ``vehicles`` is ordered front (stop bar) to back."""

    lane: str
    vehicles: list = field(default_factory=list)
    signal: str = "R"
    last_discharge: float = -math.inf
    last_actuation: float = -math.inf
    committed: set = field(default_factory=set)
    discharged_this_tick: int = 0
    residual_marker: frozenset = frozenset()

    def queue_members(self) -> set[int]:
        return {v.id for v in self.vehicles if v.speed < STOPPED_SPEED}

    @property
    def queue_count(self) -> int:
        return sum(1 for v in self.vehicles if v.speed < STOPPED_SPEED)

    def advance(self, t: float, dt: float, signal: str, cfg: SimConfig) -> list[Vehicle]:
        """Move every vehicle one tick under ``signal``; return those discharged."""
        te = t + dt
        v_ff = cfg.free_flow_speed
        jam = cfg.jam_spacing
        adv = cfg.advance_detector_pos
        headway = cfg.saturation_headway
        vehicles = self.vehicles

        if signal != self.signal:
            if signal == "G":
                self.committed = set()
                front = vehicles[0] if vehicles else None
                if front is not None and front.speed < STOPPED_SPEED and front.position <= _EPS:
                    self.last_discharge = max(self.last_discharge, t + cfg.startup_lost_time)
            elif signal == "Y":
                self.committed = {
                    veh.id for veh in vehicles
                    if veh.speed >= STOPPED_SPEED
                    and veh.position <= veh.speed * veh.speed / (2 * YELLOW_DECEL)
                }
            else:
                self.committed = set()
            self.signal = signal

        committed = self.committed
        discharged = []
        kept = []
        lead_pos = None
        lead_speed = 0.0
        for veh in vehicles:
            p = veh.position
            if lead_pos is None and (signal == "G" or veh.id in committed):
                arrive = t + p / v_ff
                if veh.id in committed:
                    depart = arrive
                else:
                    depart = max(arrive, self.last_discharge + headway)
                if depart <= te + _EPS:
                    if veh.advance_cross_time is None and p >= adv:
                        veh.advance_cross_time = t + (p - adv) / v_ff
                        self.last_actuation = max(self.last_actuation, veh.advance_cross_time)
                    veh.stopbar_cross_time = depart
                    veh.position = 0.0
                    veh.speed = v_ff
                    if veh.id not in committed:
                        self.last_discharge = depart
                    discharged.append(veh)
                    continue
            floor = 0.0 if lead_pos is None else lead_pos + jam
            new = p - v_ff * dt
            clamped = new < floor
            if clamped:
                new = min(floor, p)
            if veh.advance_cross_time is None and p >= adv > new:
                veh.advance_cross_time = t + dt * (p - adv) / (p - new)
                self.last_actuation = max(self.last_actuation, veh.advance_cross_time)
            # speed at the end of the tick: a vehicle that closed up on a stopped
            # leader (or the stop bar) is standing, however far it moved
            veh.speed = lead_speed if clamped else (p - new) / dt
            veh.position = new
            lead_pos = new
            lead_speed = veh.speed
            kept.append(veh)
        self.vehicles = kept
        self.discharged_this_tick = len(discharged)
        return discharged

    def snapshot(self, now: float, cfg: SimConfig) -> DetectorSnapshot:
        adv_hi = cfg.advance_detector_pos
        adv_lo = adv_hi - cfg.advance_detector_len
        adv_occ = stop_occ = call = False
        queue = 0
        for veh in self.vehicles:
            p = veh.position
            if adv_lo <= p <= adv_hi:
                adv_occ = True
            if p <= cfg.stop_bar_detector_len:
                stop_occ = True
            if p <= adv_hi:
                call = True
            if veh.speed < STOPPED_SPEED:
                queue += 1
        return DetectorSnapshot(
            advance_occupied=adv_occ,
            stopbar_occupied=stop_occ,
            queue_count=queue,
            discharged_count=self.discharged_this_tick,
            since_actuation=now - self.last_actuation,
            call=call,
        )


def spawn_arrivals(lane_rates, dt: float, rng: np.random.Generator,
                   t0: float = 0.0, next_id: int = 0) -> list[Vehicle]:
    """Draw Poisson arrivals for one tick on each approach.

    ``lane_rates`` maps approach to vehicles/hour (or is a 4-sequence in
    N, S, W, E order).  Arrival instants are uniform within the tick and
    the returned vehicles are ordered by approach then arrival time;
    placement on the lane is left to the caller.
    """
    if not isinstance(lane_rates, dict):
        lane_rates = dict(zip(APPROACHES, lane_rates))
    rates = np.array([lane_rates.get(a, 0.0) for a in APPROACHES], dtype=float)
    if np.any(rates < 0):
        raise ValueError("arrival rates must be non-negative")
    counts = rng.poisson(rates * dt / 3600.0)
    out = []
    for lane, n in zip(APPROACHES, counts):
        if n == 0:
            continue
        offsets = np.sort(rng.uniform(0.0, dt, size=n))
        for off in offsets:
            out.append(Vehicle(next_id, lane, math.nan, 0.0, t0 + float(off)))
            next_id += 1
    return out


def step_vehicles(lanes: dict, phase: PhaseState, t: float, cfg: SimConfig) -> dict:
    """Advance every lane one tick under the signals implied by ``phase``.

    Returns the discharged vehicles per approach.
    """
    return {
        name: lane.advance(t, cfg.sim_dt, phase.signal_for(LANE_GROUP[name]), cfg)
        for name, lane in lanes.items()
    }


def read_detectors(lanes: dict, now: float, cfg: SimConfig) -> dict[str, DetectorSnapshot]:
    return {name: lane.snapshot(now, cfg) for name, lane in lanes.items()}


@dataclass
class Counters:
    spawned: int = 0
    discharged: int = 0


def vehicle_conservation_audit(lanes: dict, entry_buffers: dict, counters: Counters) -> bool:
    in_system = sum(len(lane.vehicles) for lane in lanes.values())
    buffered = sum(len(buf) for buf in entry_buffers.values())
    return counters.spawned == in_system + counters.discharged + buffered


@dataclass(frozen=True)
class Termination:
    """A green ending: when, which group, how long, and why."""

    time: float
    group: str
    green_elapsed: float
    max_timer: float
    maxout_countdown: float
    cause: str | None


class Simulation:
    """A single intersection instance owning its lanes, phase machine and RNG.

    Drive it with :meth:`tick`, passing the decision of whatever controller
    is in charge.  ``max_timer_gated`` makes the max-out timer run only
    while an opposing call stands (fully-actuated semantics).
    """

    def __init__(self, config: SimConfig, demand: DemandSchedule,
                 plan: TimingPlan | None = None, *, max_timer_gated: bool = False,
                 record_events: bool = False, initial_group: str = "NS"):
        self.cfg = config
        self.plan = plan or TimingPlan()
        self.demand = demand
        self.max_timer_gated = max_timer_gated
        self.rng = np.random.default_rng(config.rng_seed)
        self.lanes = {a: LaneState(a) for a in APPROACHES}
        self.entry_buffers = {a: [] for a in APPROACHES}
        self.counters = Counters()
        self.discharged_by_lane = {a: 0 for a in APPROACHES}
        self.phase = PhaseState.initial(self.plan, initial_group)
        for name, lane in self.lanes.items():
            lane.signal = self.phase.signal_for(LANE_GROUP[name])
        self.time = 0.0
        self.tick_count = 0
        self.next_id = 0
        self.terminations: list[Termination] = []
        self.trace: list[tuple] = [(0.0, self.phase.active_group, self.phase.interval.value,
                                    0.0, self.phase.maxout_countdown, "")]
        self.recent_travel_times = {a: [] for a in APPROACHES}
        self.events: list[tuple] | None = [] if record_events else None
        self.queue_series: list[tuple[float, int, int]] = []
        self.detectors = read_detectors(self.lanes, self.time, self.cfg)
        self._call_onset: float | None = None

    # -- introspection -------------------------------------------------
    def opposing_call(self) -> bool:
        red = GROUP_LANES[opposing(self.phase.active_group)]
        return any(self.detectors[a].call for a in red)

    def audit(self) -> bool:
        return vehicle_conservation_audit(self.lanes, self.entry_buffers, self.counters)

    def queue_members(self) -> dict[str, set[int]]:
        return {a: lane.queue_members() for a, lane in self.lanes.items()}

    def delay_ratio_sum(self) -> float:
        """Sum over vehicles between the detectors of elapsed / desired travel time."""
        desired = self.cfg.desired_travel_time
        now = self.time
        total = 0.0
        for lane in self.lanes.values():
            for veh in lane.vehicles:
                if veh.advance_cross_time is not None:
                    total += (now - veh.advance_cross_time) / desired
        return total

    def drain_travel_times(self) -> dict[str, list[float]]:
        out = self.recent_travel_times
        self.recent_travel_times = {a: [] for a in APPROACHES}
        return out

    # -- dynamics --------------------------------------------------------
    def tick(self, decision: ControllerDecision = KEEP) -> None:
        cfg = self.cfg
        t = self.time
        dt = cfg.sim_dt
        before = self.phase
        during = apply_decision(before, decision, self.plan)
        if during is not before and during.interval is Interval.YELLOW:
            self.terminations.append(Termination(
                t, before.active_group, before.green_elapsed, before.max_timer,
                before.maxout_countdown,
                decision.cause.value if decision.cause else None))
            self._trace(t, during, decision.cause.value if decision.cause else "")
            self._log("phase", -1, "", 0.0, during)

        discharged = step_vehicles(self.lanes, during, t, cfg)
        for name, vehs in discharged.items():
            if not vehs:
                continue
            self.discharged_by_lane[name] += len(vehs)
            self.counters.discharged += len(vehs)
            recent = self.recent_travel_times[name]
            for veh in vehs:
                tt = veh.travel_time
                if tt is not None:
                    recent.append(tt)
                self._log("discharge", veh.id, name, veh.stopbar_cross_time, during)

        self._spawn(t, dt, during)

        running = (not self.max_timer_gated) or self.opposing_call()
        after = elapse(during, dt, self.plan, running)
        if after.interval is not during.interval:
            self._trace(t + dt, after, "")
            self._log("phase", -1, "", 0.0, after)
        self.phase = after
        self.time = t + dt
        self.tick_count += 1
        self.detectors = read_detectors(self.lanes, self.time, cfg)
        d = self.detectors
        self.queue_series.append((self.time, d["N"].queue_count + d["S"].queue_count,
                                  d["W"].queue_count + d["E"].queue_count))

    def run(self, controller, duration: float) -> None:
        end = self.time + duration - 1e-9
        while self.time < end:
            self.tick(controller.decide(self.phase, self.detectors))

    def _spawn(self, t: float, dt: float, during: PhaseState) -> None:
        cfg = self.cfg
        arrivals = spawn_arrivals(self.demand.rates_at(t), dt, self.rng, t, self.next_id)
        self.next_id += len(arrivals)
        self.counters.spawned += len(arrivals)
        te = t + dt
        by_lane = {a: [] for a in APPROACHES}
        for veh in arrivals:
            by_lane[veh.lane].append(veh)
        for name in APPROACHES:
            lane = self.lanes[name]
            buf = self.entry_buffers[name]
            # Buffered vehicles enter first, at the lane entry, when there is room.
            while buf:
                last = lane.vehicles[-1].position if lane.vehicles else -math.inf
                if last + cfg.jam_spacing > cfg.lane_length + _EPS:
                    break
                veh = buf.pop(0)
                veh.position = cfg.lane_length
                veh.speed = 0.0 if last + cfg.jam_spacing >= cfg.lane_length - _EPS else cfg.free_flow_speed
                lane.vehicles.append(veh)
                self._log("enter", veh.id, name, veh.position, during)
            for veh in by_lane[name]:
                self._log("spawn", veh.id, name, cfg.lane_length, during)
                if buf:
                    buf.append(veh)
                    continue
                pos = cfg.lane_length - cfg.free_flow_speed * (te - veh.spawn_time)
                if lane.vehicles:
                    pos = max(pos, lane.vehicles[-1].position + cfg.jam_spacing)
                if pos > cfg.lane_length + _EPS:
                    buf.append(veh)
                    continue
                veh.position = pos
                veh.speed = cfg.free_flow_speed
                adv = cfg.advance_detector_pos
                if pos < adv:
                    veh.advance_cross_time = te - (adv - pos) / cfg.free_flow_speed
                    lane.last_actuation = max(lane.last_actuation, veh.advance_cross_time)
                lane.vehicles.append(veh)
                self._log("enter", veh.id, name, veh.position, during)

    def _trace(self, time: float, phase: PhaseState, cause: str) -> None:
        self.trace.append((time, phase.active_group, phase.interval.value,
                           phase.green_elapsed, phase.maxout_countdown, cause))

    def _log(self, event: str, vid: int, lane: str, position: float, phase: PhaseState) -> None:
        if self.events is not None:
            self.events.append((self.tick_count, event, vid, lane, position,
                                f"{phase.active_group}:{phase.interval.value}"))

    # -- outputs ---------------------------------------------------------
    def write_event_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tick", "event", "vehicle_id", "lane", "position", "phase"])
            for tick, event, vid, lane, pos, phase in self.events or []:
                writer.writerow([tick, event, vid, lane, repr(float(pos)), phase])

    def write_signal_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_s", "group", "interval", "green_elapsed",
                             "maxout_countdown", "cause"])
            for row in self.trace:
                time, group, interval, green, cd, cause = row
                writer.writerow([repr(float(time)), group, interval, repr(float(green)),
                                 repr(float(cd)), cause])
