from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signalbench.demand import DemandSchedule, sample_training_demand
from signalbench.env import (
    EnvConfig,
    Observation,
    RewardInputs,
    RewardWeights,
    SignalEnv,
    build_observation,
    compute_penalty,
    compute_reward,
    compute_residual_queue,
)
from signalbench.signals import Action

W = RewardWeights()


def test_default_reward_weights():
    assert (W.w1, W.w2, W.w3, W.w4, W.C) == (-1, -0.5, 2, -1, 0.9)


@pytest.mark.parametrize("counter,C,expected", [(0, 0.9, 1.0), (1, 0.9, 0.9),
                                                (10, 0.9, 0.3486784401)])
def test_penalty(counter, C, expected):
    assert compute_penalty(counter, C) == pytest.approx(expected, abs=1e-12)


def test_penalty_rejects_negative_counter():
    with pytest.raises(ValueError):
        compute_penalty(-1, 0.9)


def test_reward_examples():
    assert compute_reward(RewardInputs()) == 0.0
    assert compute_reward(RewardInputs(10, 4, 3, 2, 0), W) == -8.0
    assert compute_reward(RewardInputs(0, 0, 5, 0, 10), W) == pytest.approx(2 * 5 * 0.9 ** 10)
    assert compute_reward(RewardInputs(0, 0, 5, 0, 10), W) == pytest.approx(3.4868, abs=1e-4)


nonneg = st.floats(0, 1e4, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(L=nonneg, D=nonneg, F=nonneg, S=nonneg, counter=st.integers(0, 50),
       k=st.floats(0, 100))
def test_reward_linear_in_each_term(L, D, F, S, counter, k):
    base = RewardInputs(L, D, F, S, counter)
    r0 = compute_reward(base)
    zero = compute_reward(RewardInputs(0, 0, 0, 0, counter))
    for field in ("L_sum", "D_sum", "F_sum", "S_sum"):
        vals = {"L_sum": L, "D_sum": D, "F_sum": F, "S_sum": S}
        vals[field] *= k
        scaled = compute_reward(RewardInputs(counter=counter, **vals))
        expected = r0 + (k - 1) * (compute_reward(RewardInputs(
            counter=counter, **{f: (v if f == field else 0) for f, v in
                                {"L_sum": L, "D_sum": D, "F_sum": F, "S_sum": S}.items()})) - zero)
        assert scaled == pytest.approx(expected, rel=1e-9, abs=1e-6)


@given(counter=st.integers(0, 100), C=st.floats(0.5, 0.99))
def test_penalty_strictly_decreasing(counter, C):
    assert compute_penalty(counter + 1, C) < compute_penalty(counter, C)


@given(L=nonneg, D=nonneg, S=nonneg, counter=st.integers(0, 20))
def test_no_discharge_means_negative_reward(L, D, S, counter):
    if L + D + S > 0:
        assert compute_reward(RewardInputs(L, D, 0.0, S, counter)) < 0


@pytest.mark.parametrize("prev,cur,expected", [(set(), {1, 2}, 0), ({1, 2, 3}, {2, 3, 4}, 2),
                                               ({1, 2, 3}, set(), 0)])
def test_residual_queue(prev, cur, expected):
    assert compute_residual_queue(prev, cur) == expected


@given(prev=st.sets(st.integers(0, 30)), cur=st.sets(st.integers(0, 30)))
def test_residual_bounded(prev, cur):
    assert compute_residual_queue(prev, cur) <= min(len(prev), len(cur))


def test_residual_matches_count_identity_without_new_arrivals():
    # When nobody joins the queue, stuck = previous queue - vehicles that left.
    prev = {1, 2, 3, 4, 5}
    cur = {3, 4, 5}
    left = len(prev - cur)
    assert compute_residual_queue(prev, cur) == len(prev) - left


def test_observation_building():
    empty = build_observation((0, 0, 0, 0), {})
    np.testing.assert_array_equal(empty.as_array(), np.zeros(8))
    obs = build_observation((3, 1, 9, 4), {"W": [8.87]})
    assert obs.t_avg == (0.0, 0.0, 8.87, 0.0)
    assert obs.queue == (3, 1, 9, 4)
    carried = build_observation((0, 0, 0, 0), {"N": [5.0, 7.0]}, previous=obs)
    assert carried.t_avg == (6.0, 0.0, 8.87, 0.0)


def test_normalization():
    obs = Observation((600.0, 30.0, 0.0, 0.0), (200, 10, 0, 0))
    np.testing.assert_allclose(obs.normalized(), [5.0, 0.5, 0, 0, 5.0, 0.5, 0, 0])
    assert Observation(phase=(1.0, 0.0)).dim == 10


def empty_env(**kw):
    return SignalEnv(demand=DemandSchedule.constant((0, 0, 0, 0)), env_config=EnvConfig(**kw))


def test_keep_in_empty_network():
    env = empty_env(phase_indicator=False)
    obs = env.reset(seed=0)
    assert obs.as_array().tolist() == [0.0] * 8
    res = env.step(0)
    assert res.reward == 0.0 and res.elapsed == 3 and not res.terminal


def test_change_takes_fifteen_seconds():
    env = empty_env()
    env.reset(seed=0)
    assert env.sim.phase.green_elapsed >= 10
    res = env.step(1)
    assert res.elapsed == 15
    assert env.sim.phase.active_group == "WE" and env.sim.phase.is_green


def test_counter_and_penalty_after_max_green():
    env = SignalEnv(demand=DemandSchedule.constant((0, 0, 1800, 1800)))
    env.reset(seed=1)
    while env.sim.phase.green_elapsed <= 60:
        res = env.step(0)
        assert res.inputs.counter == 0
    assert env.sim.phase.green_elapsed == 61
    res = env.step(0)
    assert res.inputs.counter == 1
    row = env.trace[-1]
    assert row[-1] == pytest.approx(0.9)
    unpenalized = compute_reward(replace(res.inputs, counter=0))
    assert res.reward == pytest.approx(unpenalized - 2 * res.inputs.F_sum * (1 - 0.9))
    assert env.step(1).inputs.counter == 0


def test_green_ceiling_forces_change():
    env = empty_env()
    env.reset(seed=0)
    notes = []
    while env.sim.phase.active_group == "NS":
        notes.append(env.step(0).note)
    assert notes[-1] == "green ceiling"
    term = env.sim.terminations[-1]
    assert term.green_elapsed <= 120 and term.maxout_countdown >= -60


def test_deferred_change_under_min_green():
    env = empty_env()
    env.reset(seed=0)
    env.sim.phase = type(env.sim.phase)(active_group="NS", green_elapsed=4.0, interval_elapsed=4.0)
    res = env.step(1)
    assert res.action is Action.KEEP and res.elapsed == 3 and "deferred" in res.note


def test_episode_clock_and_terminal():
    env = SignalEnv(demand=DemandSchedule.constant((300, 300, 600, 600)))
    env.reset(seed=3)
    # default observation: 8 values plus the two-value phase indicator
    rng = np.random.default_rng(0)
    total = 0.0
    dims = set()
    while True:
        res = env.step(int(rng.integers(0, 2)))
        assert res.elapsed in (3, 15)
        total += res.elapsed
        dims.add(res.observation.as_array().shape)
        if res.terminal:
            break
    assert abs(env.clock - 3600) <= 15
    assert abs(total + 10 - 3600) <= 15
    assert dims == {(10,)}
    with pytest.raises(RuntimeError):
        env.step(0)


def test_phase_indicator_dimension():
    env = empty_env(phase_indicator=True)
    obs = env.reset(seed=0)
    assert obs.dim == 10 and obs.phase == (1.0, 0.0)
    assert env.step(1).observation.phase == (0.0, 1.0)


def test_training_demand_sampling(rng):
    sched = sample_training_demand(rng)
    rates = sched.entries[0][1]
    assert len(sched.entries) == 1 and all(135 <= r <= 2400 for r in rates)
    draws = np.array([sample_training_demand(rng).entries[0][1] for _ in range(10_000)])
    se = (2400 - 135) / np.sqrt(12) / np.sqrt(10_000)
    assert np.all(np.abs(draws.mean(axis=0) - 1267.5) < 3 * se)
    fixed = sample_training_demand(rng, 600, 600)
    assert fixed.entries[0][1] == (600.0,) * 4


def test_step_trace_csv(tmp_path):
    env = SignalEnv(demand=DemandSchedule.constant((300, 300, 600, 600)))
    env.reset(seed=0)
    for a in (0, 0, 1, 0):
        env.step(a)
    path = tmp_path / "steps.csv"
    env.write_step_trace(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time_s,action,elapsed,reward,L_sum,D_sum,F_sum,S_sum,counter,penalty"
    assert len(lines) == 5
