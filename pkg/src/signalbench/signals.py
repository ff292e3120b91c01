"""Two-group NEMA phase machine and the baseline signal controllers.

Phases 4+8 form the ``NS`` group, phases 2+6 the ``WE`` group.  A phase
state describes the interval currently timing; controllers are asked for a
decision at the start of every simulation tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

GROUPS = ("NS", "WE")
GROUP_LANES = {"NS": ("N", "S"), "WE": ("W", "E")}
LANE_GROUP = {"N": "NS", "S": "NS", "W": "WE", "E": "WE"}


class Interval(str, Enum):
    GREEN = "Green"
    YELLOW = "Yellow"
    RED_CLEARANCE = "RedClearance"


class Action(str, Enum):
    KEEP = "Keep"
    CHANGE = "Change"


class Cause(str, Enum):
    FIXED_PLAN = "FixedPlan"
    GAP_OUT = "GapOut"
    MAX_OUT = "MaxOut"
    AGENT_CHOICE = "AgentChoice"
    MIN_GREEN_HOLD = "MinGreenHold"
    REST = "Rest"
    CEILING = "Ceiling"


class PhaseSequenceError(RuntimeError):
    """A controller asked for a transition the phase machine cannot make."""


def opposing(group: str) -> str:
    return "WE" if group == "NS" else "NS"


@dataclass(frozen=True)
class TimingPlan:
    min_green: float = 10.0
    yellow_time: float = 4.0
    red_clearance: float = 1.0
    max_green: float = 60.0
    max_allowable_headway: float = 3.5
    gap_out_extension: float = 0.0

    def __post_init__(self):
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        errors = []
        for name in ("min_green", "yellow_time", "red_clearance", "max_green",
                     "max_allowable_headway"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        if self.gap_out_extension < 0:
            errors.append("gap_out_extension must be >= 0")
        if self.min_green > self.max_green:
            errors.append("min_green must not exceed max_green")
        return errors

    @property
    def maxout_allowance(self) -> float:
        return self.max_green - self.min_green

    @property
    def change_duration(self) -> float:
        """Yellow + red clearance + the opposing minimum green."""
        return self.yellow_time + self.red_clearance + self.min_green


@dataclass(frozen=True)
class PhaseState:
    """Snapshot of the phase machine.

    ``max_timer`` is the green time that counts against max-out.  Pre-timed
    and agent control run it for the whole green; the actuated controller
    only runs it while an opposing call stands.
    """

    active_group: str = "NS"
    interval: Interval = Interval.GREEN
    interval_elapsed: float = 0.0
    green_elapsed: float = 0.0
    max_timer: float = 0.0
    maxout_countdown: float = 50.0

    @classmethod
    def initial(cls, plan: TimingPlan, group: str = "NS") -> "PhaseState":
        return cls(active_group=group, maxout_countdown=plan.maxout_allowance)

    @property
    def is_green(self) -> bool:
        return self.interval is Interval.GREEN

    def signal_for(self, group: str) -> str:
        """``'G'``, ``'Y'`` or ``'R'`` as seen by the approaches of ``group``."""
        if group != self.active_group or self.interval is Interval.RED_CLEARANCE:
            return "R"
        return "G" if self.interval is Interval.GREEN else "Y"


@dataclass(frozen=True)
class ControllerDecision:
    action: Action = Action.KEEP
    cause: Cause | None = None


KEEP = ControllerDecision(Action.KEEP)


def countdown(max_timer: float, plan: TimingPlan) -> float:
    return plan.maxout_allowance - max(0.0, max_timer - plan.min_green)


def apply_decision(phase: PhaseState, decision: ControllerDecision,
                   plan: TimingPlan) -> PhaseState:
    """Start the change interval if ``decision`` is a Change; otherwise no-op."""
    if decision.action is not Action.CHANGE:
        return phase
    if phase.interval is not Interval.GREEN:
        raise PhaseSequenceError(f"Change requested during {phase.interval.value}")
    if phase.green_elapsed < plan.min_green - 1e-9:
        raise PhaseSequenceError(
            f"Change requested at green_elapsed={phase.green_elapsed} < min_green")
    return replace(phase, interval=Interval.YELLOW, interval_elapsed=0.0)


def elapse(phase: PhaseState, dt: float, plan: TimingPlan,
           max_timer_running: bool = True) -> PhaseState:
    """Advance interval timers by ``dt`` and make the timed transitions."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    elapsed = phase.interval_elapsed + dt
    if phase.interval is Interval.GREEN:
        max_timer = phase.max_timer + dt if max_timer_running else phase.max_timer
        return replace(phase, interval_elapsed=elapsed,
                       green_elapsed=phase.green_elapsed + dt,
                       max_timer=max_timer,
                       maxout_countdown=countdown(max_timer, plan))
    if phase.interval is Interval.YELLOW:
        if elapsed >= plan.yellow_time - 1e-9:
            return replace(phase, interval=Interval.RED_CLEARANCE,
                           interval_elapsed=elapsed - plan.yellow_time)
        return replace(phase, interval_elapsed=elapsed)
    if elapsed >= plan.red_clearance - 1e-9:
        return PhaseState(active_group=opposing(phase.active_group),
                          interval=Interval.GREEN,
                          interval_elapsed=0.0, green_elapsed=0.0, max_timer=0.0,
                          maxout_countdown=plan.maxout_allowance)
    return replace(phase, interval_elapsed=elapsed)


def advance_phase(phase: PhaseState, decision: ControllerDecision, dt: float,
                  plan: TimingPlan, max_timer_running: bool = True) -> PhaseState:
    """One controller tick: apply ``decision`` then elapse ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return elapse(apply_decision(phase, decision, plan), dt, plan, max_timer_running)


@dataclass(frozen=True)
class DetectorSnapshot:
    """What one approach's loops report at a tick boundary.

    ``since_actuation`` is the time since the last vehicle entered the
    advance detector zone (``inf`` if none ever did).  ``call`` is true
    while a vehicle is between the advance detector and the stop bar.
    """

    advance_occupied: bool = False
    stopbar_occupied: bool = False
    queue_count: int = 0
    discharged_count: int = 0
    since_actuation: float = math.inf
    call: bool = False


def pretimed_decide(phase: PhaseState, plan: TimingPlan) -> ControllerDecision:
    if phase.is_green and phase.green_elapsed >= plan.max_green - 1e-9:
        return ControllerDecision(Action.CHANGE, Cause.FIXED_PLAN)
    return ControllerDecision(Action.KEEP, Cause.FIXED_PLAN)


def actuated_decide(phase: PhaseState, detectors: dict[str, DetectorSnapshot],
                    plan: TimingPlan) -> ControllerDecision:
    """Fully-actuated gap-out / max-out logic with rest-in-green.

    Gap-out needs both a gap longer than the allowable headway since the
    last advance actuation on the green approaches and an empty detector
    zone, so a standing queue over the loop holds the green.
    """
    if not phase.is_green:
        return KEEP
    if phase.green_elapsed < plan.min_green - 1e-9:
        return ControllerDecision(Action.KEEP, Cause.MIN_GREEN_HOLD)
    green_lanes = GROUP_LANES[phase.active_group]
    red_lanes = GROUP_LANES[opposing(phase.active_group)]
    if not any(detectors[lane].call for lane in red_lanes):
        return ControllerDecision(Action.KEEP, Cause.REST)
    if phase.max_timer >= plan.max_green - 1e-9:
        return ControllerDecision(Action.CHANGE, Cause.MAX_OUT)
    gap = min(detectors[lane].since_actuation for lane in green_lanes)
    occupied = any(detectors[lane].advance_occupied for lane in green_lanes)
    if gap > plan.max_allowable_headway + plan.gap_out_extension and not occupied:
        return ControllerDecision(Action.CHANGE, Cause.GAP_OUT)
    return KEEP


class PretimedController:
    name = "pretimed"
    max_timer_gated = False

    def __init__(self, plan: TimingPlan):
        self.plan = plan

    def decide(self, phase, detectors) -> ControllerDecision:
        return pretimed_decide(phase, self.plan)


class ActuatedController:
    name = "actuated"
    max_timer_gated = True

    def __init__(self, plan: TimingPlan):
        self.plan = plan

    def decide(self, phase, detectors) -> ControllerDecision:
        return actuated_decide(phase, detectors, self.plan)
