import numpy as np
import pytest

from signalbench.demand import DemandSchedule
from signalbench.signals import ActuatedController, PretimedController, TimingPlan
from signalbench.sim import SimConfig, Simulation


def run_sim(controller_cls, rates=(300, 300, 600, 600), seed=0, duration=600.0,
            record_events=False, demand=None, check=None):
    plan = TimingPlan()
    ctl = controller_cls(plan)
    demand = demand or DemandSchedule.constant(rates)
    sim = Simulation(SimConfig(rng_seed=seed), demand, plan,
                     max_timer_gated=ctl.max_timer_gated, record_events=record_events)
    end = duration - 1e-9
    while sim.time < end:
        sim.tick(ctl.decide(sim.phase, sim.detectors))
        if check is not None:
            check(sim)
    return sim


@pytest.fixture
def pretimed():
    return PretimedController


@pytest.fixture
def actuated():
    return ActuatedController


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
