"""
Training the agent and comparing controllers
============================================

A full run is 500 one-hour episodes (``signalbench train``).  This script runs
a shortened schedule so it finishes in well under a minute, then evaluates the
greedy policy on the evening peak next to the two baselines.  With so little
training the agent is not expected to win; the point is the workflow.
Pass a checkpoint path as the first argument to evaluate a fully trained agent.
"""

import sys
import tempfile

from signalbench.demand import scenario_demand
from signalbench.dqn import DqnConfig, read_training_log, run_training
from signalbench.experiments import compare_controllers
from signalbench.neural import load_checkpoint

if len(sys.argv) > 1:
    net = load_checkpoint(sys.argv[1])
else:
    cfg = DqnConfig(episodes=8, replay_start_size=1000, eps_decay_steps=2000, seed=3)
    out = tempfile.mkdtemp(prefix="signalbench-demo-")
    result = run_training(cfg, out_dir=out,
                          progress=lambda e: print(f"episode {e.episode}: return {e.ret:9.0f}, "
                                                   f"epsilon {e.epsilon:.3f}"))
    net = result.net
    log = read_training_log(f"{out}/training_log.csv")
    print(f"{len(log)} episodes logged in {out}")

# %%
demand, duration = scenario_demand("evening")
summary = compare_controllers(demand, duration, net, seeds=[0, 1])
for direction in ("NS", "WE", "total"):
    means = ", ".join(f"{c} {v[direction]:.2f}" for c, v in summary.means.items())
    print(f"{direction:5s} {summary.verdicts[direction]:30s} ({means})")
