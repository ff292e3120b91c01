import math

import pytest

from conftest import run_sim
from signalbench.signals import (
    KEEP,
    Action,
    ActuatedController,
    Cause,
    ControllerDecision,
    DetectorSnapshot,
    Interval,
    PhaseSequenceError,
    PhaseState,
    PretimedController,
    TimingPlan,
    actuated_decide,
    advance_phase,
    pretimed_decide,
)

PLAN = TimingPlan()
CHANGE = ControllerDecision(Action.CHANGE, Cause.AGENT_CHOICE)


def green(group="NS", elapsed=0.0):
    return PhaseState(active_group=group, green_elapsed=elapsed, interval_elapsed=elapsed,
                      max_timer=elapsed,
                      maxout_countdown=PLAN.maxout_allowance - max(0.0, elapsed - PLAN.min_green))


def test_default_plan():
    assert (PLAN.min_green, PLAN.yellow_time, PLAN.red_clearance) == (10, 4, 1)
    assert PLAN.max_green == 60 and PLAN.max_allowable_headway == 3.5
    assert PLAN.gap_out_extension == 0 and PLAN.change_duration == 15


def test_plan_validation():
    with pytest.raises(ValueError):
        TimingPlan(min_green=70)
    with pytest.raises(ValueError):
        TimingPlan(yellow_time=0)


def test_change_sequence_takes_fifteen_seconds():
    phase = advance_phase(green("NS", 10), CHANGE, 1.0, PLAN)
    seen = [(phase.active_group, phase.interval)]
    t = 1
    while not (phase.active_group == "WE" and phase.is_green and phase.green_elapsed >= 10):
        phase = advance_phase(phase, KEEP, 1.0, PLAN)
        seen.append((phase.active_group, phase.interval))
        t += 1
    assert t == 15
    assert seen[:4] == [("NS", Interval.YELLOW)] * 3 + [("NS", Interval.RED_CLEARANCE)]
    assert seen[4] == ("WE", Interval.GREEN)


def test_keep_elapses_green():
    phase = advance_phase(green("NS", 10), KEEP, 3.0, PLAN)
    assert phase.is_green and phase.active_group == "NS" and phase.green_elapsed == 13


def test_countdown_hits_zero_at_max_green():
    phase = green("NS", 0)
    for _ in range(60):
        phase = advance_phase(phase, KEEP, 1.0, PLAN)
    assert phase.maxout_countdown == 0
    for _ in range(5):
        phase = advance_phase(phase, KEEP, 1.0, PLAN)
    assert phase.maxout_countdown == -5


def test_change_rejected_outside_green_or_before_min():
    yellow = advance_phase(green("NS", 10), CHANGE, 1.0, PLAN)
    with pytest.raises(PhaseSequenceError):
        advance_phase(yellow, CHANGE, 1.0, PLAN)
    with pytest.raises(PhaseSequenceError):
        advance_phase(green("NS", 5), CHANGE, 1.0, PLAN)


def test_pretimed_decisions():
    assert pretimed_decide(green("NS", 59), PLAN).action is Action.KEEP
    d = pretimed_decide(green("NS", 60), PLAN)
    assert d.action is Action.CHANGE and d.cause is Cause.FIXED_PLAN
    assert pretimed_decide(green("WE", 30), PLAN).action is Action.KEEP


def snaps(ns=DetectorSnapshot(), we=DetectorSnapshot()):
    return {"N": ns, "S": ns, "W": we, "E": we}


def test_actuated_gap_out():
    ns = DetectorSnapshot(since_actuation=4.0)
    we = DetectorSnapshot(call=True)
    d = actuated_decide(green("NS", 20), snaps(ns, we), PLAN)
    assert d.action is Action.CHANGE and d.cause is Cause.GAP_OUT


def test_actuated_extends_within_headway():
    ns = DetectorSnapshot(since_actuation=3.0)
    d = actuated_decide(green("NS", 20), snaps(ns, DetectorSnapshot(call=True)), PLAN)
    assert d.action is Action.KEEP


def test_actuated_presence_holds_green():
    ns = DetectorSnapshot(since_actuation=30.0, advance_occupied=True)
    d = actuated_decide(green("NS", 20), snaps(ns, DetectorSnapshot(call=True)), PLAN)
    assert d.action is Action.KEEP


def test_actuated_max_out():
    ns = DetectorSnapshot(since_actuation=0.5, advance_occupied=True)
    d = actuated_decide(green("NS", 60), snaps(ns, DetectorSnapshot(call=True)), PLAN)
    assert d.action is Action.CHANGE and d.cause is Cause.MAX_OUT


@pytest.mark.parametrize("elapsed", [10, 20, 60, 300])
def test_actuated_rests_without_opposing_call(elapsed):
    ns = DetectorSnapshot(since_actuation=math.inf)
    assert actuated_decide(green("NS", elapsed), snaps(ns), PLAN).action is Action.KEEP


def test_actuated_respects_min_green():
    ns = DetectorSnapshot(since_actuation=math.inf)
    d = actuated_decide(green("NS", 9), snaps(ns, DetectorSnapshot(call=True)), PLAN)
    assert d.action is Action.KEEP and d.cause is Cause.MIN_GREEN_HOLD


def intervals(sim):
    """(group, interval, duration) for every completed interval in the trace."""
    rows = sim.trace
    return [(a[1], a[2], b[0] - a[0]) for a, b in zip(rows, rows[1:])]


@pytest.mark.parametrize("ctl", [PretimedController, ActuatedController])
def test_safety_sequencing_and_min_green(ctl):
    sim = run_sim(ctl, rates=(400, 400, 800, 800), duration=3600)
    seq = intervals(sim)
    for (g1, i1, _), (g2, i2, _) in zip(seq, seq[1:]):
        nxt = {"Green": "Yellow", "Yellow": "RedClearance", "RedClearance": "Green"}[i1]
        assert i2 == nxt
        assert (g2 == g1) == (i1 != "RedClearance")
    for group, interval, dur in seq:
        if interval == "Yellow":
            assert dur == 4
        elif interval == "RedClearance":
            assert dur == 1
        else:
            assert dur >= 10
    for term in sim.terminations:
        assert term.maxout_countdown == PLAN.maxout_allowance - max(0.0, term.max_timer - 10)


def test_pretimed_trace_periodic():
    sim = run_sim(PretimedController, duration=3600)
    starts = [(row[0], row[1], row[2]) for row in sim.trace]
    by_time = {t: (g, i) for t, g, i in starts}
    for t, g, i in starts:
        if t + 130 <= 3600:
            assert by_time[t + 130] == (g, i)
    assert all(term.maxout_countdown == 0 for term in sim.terminations)


def test_actuated_max_out_bound():
    bound_violations = []

    def check(sim):
        if sim.phase.is_green and sim.opposing_call():
            # max_timer runs exactly while an opposing call stands
            if sim.phase.max_timer > PLAN.max_green + sim.cfg.sim_dt:
                bound_violations.append(sim.time)

    sim = run_sim(ActuatedController, rates=(1200, 1200, 1200, 1200), duration=3600, check=check)
    assert not bound_violations
    assert any(t.cause == "MaxOut" for t in sim.terminations)
    assert all(0 <= t.maxout_countdown <= 50 for t in sim.terminations)
