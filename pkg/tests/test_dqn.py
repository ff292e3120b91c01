import math

import numpy as np
import pytest

from signalbench.dqn import (
    DqnConfig,
    Learner,
    ReplayBuffer,
    epsilon_at,
    read_training_log,
    run_training,
    select_action,
    td_target,
    train_step,
)
from signalbench.neural import DenseNet, Layer, forward, load_checkpoint

CFG = DqnConfig()


def test_default_hyperparameters():
    assert (CFG.episodes, CFG.gamma, CFG.minibatch) == (500, 0.99, 16)
    assert (CFG.eps_start, CFG.eps_end, CFG.eps_decay_steps) == (1.0, 0.005, 20000)
    assert (CFG.replay_start_size, CFG.target_update_interval) == (15000, 2000)


@pytest.mark.parametrize("kwargs", [{"gamma": 1.0}, {"gamma": 1.5}, {"gamma": -0.1},
                                    {"eps_end": 0.5, "eps_start": 0.1},
                                    {"replay_start_size": 10, "replay_capacity": 5}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        DqnConfig(**kwargs)


def test_epsilon_schedule():
    assert epsilon_at(0, CFG) == 1.0
    assert epsilon_at(20000, CFG) == 0.005
    assert epsilon_at(10**6, CFG) == 0.005
    assert epsilon_at(10000, CFG) == pytest.approx(0.5025)
    values = [epsilon_at(s, CFG) for s in range(0, 25000, 97)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def fixed_q_net(q0, q1):
    return DenseNet([Layer(np.zeros((2, 8)), np.array([q0, q1]), "identity")])


def test_greedy_and_tie_break(rng):
    assert select_action(fixed_q_net(0.2, 0.7), np.zeros(8), 0.0, rng) == 1
    assert select_action(fixed_q_net(0.5, 0.5), np.zeros(8), 0.0, rng) == 0


def test_uniform_exploration(rng):
    net = fixed_q_net(1.0, 0.0)
    draws = [select_action(net, np.zeros(8), 1.0, rng) for _ in range(10_000)]
    se = math.sqrt(0.25 / 10_000)
    assert abs(np.mean(draws) - 0.5) < 3 * se


def test_td_targets():
    target = fixed_q_net(2.0, 3.0)
    s = np.zeros((3, 8))
    y = td_target([-8.0, 1.0, 1.0], s, [True, False, False], target, 0.99)
    np.testing.assert_allclose(y, [-8.0, 3.97, 3.97])
    np.testing.assert_array_equal(td_target([0.5, -2.0], s[:2], [False, False], target, 0.0),
                                  [0.5, -2.0])


def test_terminal_masking_ignores_next_state():
    huge = fixed_q_net(1e9, 1e9)
    assert td_target([1.0], np.zeros((1, 8)), [True], huge, 0.99)[0] == 1.0


def test_buffer_fifo_overwrite():
    buf = ReplayBuffer(5, 1)
    for k in range(8):
        buf.add([k], 0, float(k), [k + 1], False)
    assert len(buf) == 5
    assert [buf[i].r for i in range(5)] == [3.0, 4.0, 5.0, 6.0, 7.0]
    with pytest.raises(ValueError):
        buf.add([0], 0, math.nan, [0], False)


def fill(buf, n, rng):
    for _ in range(n):
        buf.add(rng.normal(size=8), int(rng.integers(0, 2)), float(rng.normal()),
                rng.normal(size=8), bool(rng.random() < 0.1))


def test_no_update_below_replay_start(rng):
    learner = Learner(DenseNet.init((8, 32, 16, 2), rng), CFG, np.random.default_rng(0))
    buf = ReplayBuffer(20000, 8)
    fill(buf, 14999, rng)
    before = [p.copy() for p in learner.online.params()]
    assert train_step(buf, learner, 1) is None
    for a, b in zip(before, learner.online.params()):
        np.testing.assert_array_equal(a, b)
    fill(buf, 1, rng)
    assert train_step(buf, learner, 2) is not None


def test_target_sync_schedule(rng):
    cfg = DqnConfig(replay_start_size=100, target_update_interval=50)
    learner = Learner(DenseNet.init((8, 32, 16, 2), rng), cfg, np.random.default_rng(0))
    buf = ReplayBuffer(1000, 8)
    fill(buf, 200, rng)
    frozen = [p.copy() for p in learner.target.params()]
    for step in range(1, 151):
        train_step(buf, learner, step)
        if step % 50 == 0:
            for a, b in zip(learner.target.params(), learner.online.params()):
                np.testing.assert_array_equal(a, b)
            frozen = [p.copy() for p in learner.target.params()]
        else:
            for a, b in zip(learner.target.params(), frozen):
                np.testing.assert_array_equal(a, b)


# Two states, action 0 stays and action 1 switches.
MDP_REWARD = np.array([[0.0, 1.0], [2.0, 0.0]])
MDP_NEXT = np.array([[0, 1], [1, 0]])


def value_iteration(gamma, tol=1e-10):
    q = np.zeros((2, 2))
    while True:
        new = MDP_REWARD + gamma * q[MDP_NEXT].max(axis=2)
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new


def train_tabular(steps, gamma=0.9, seed=0):
    cfg = DqnConfig(gamma=gamma, replay_start_size=500, replay_capacity=10_000,
                    target_update_interval=500, eps_start=1.0, eps_end=1.0)
    rng = np.random.default_rng(seed)
    learner = Learner(DenseNet.init((2, 32, 16, 2), rng), cfg, np.random.default_rng(seed + 1))
    buf = ReplayBuffer(cfg.replay_capacity, 2)
    eye = np.eye(2)
    s = 0
    for step in range(1, steps + 1):
        a = select_action(learner.online, eye[s], 1.0, rng)
        s2 = int(MDP_NEXT[s, a])
        buf.add(eye[s], a, MDP_REWARD[s, a], eye[s2], False)
        s = s2
        train_step(buf, learner, step)
    return forward(learner.online, eye)


def test_value_iteration_oracle():
    q = value_iteration(0.9)
    # closed form: staying in state 1 earns 2 forever; state 0 switches into it
    v1 = 2 / (1 - 0.9)
    v0 = 1 + 0.9 * v1
    np.testing.assert_allclose(q.max(axis=1), [v0, v1], atol=1e-8)


def test_tabular_dqn_converges_to_q_star():
    q = train_tabular(50_000)
    assert np.max(np.abs(q - value_iteration(0.9))) < 0.05


def test_training_smoke_and_determinism(tmp_path):
    cfg = DqnConfig(episodes=2, replay_start_size=200, seed=7)
    logs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        run_training(cfg, out_dir=out)
        rows = read_training_log(out / "training_log.csv")
        assert len(rows) == 2
        assert set(rows[0]) == {"episode", "steps", "return", "mean_loss",
                                "epsilon_end_of_episode", "demand_N", "demand_S",
                                "demand_W", "demand_E"}
        net = load_checkpoint(out / "checkpoint.txt")
        assert net.sizes == (10, 32, 16, 2)
        logs.append((out / "training_log.csv").read_bytes())
    assert logs[0] == logs[1]
    header = logs[0].decode().splitlines()
    assert "# gamma=0.99" in header and "# replay_start_size=200" in header
