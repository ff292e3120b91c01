"""
The agent's view of the intersection
====================================

The environment wraps the simulator behind two actions.  Keep extends the
current green by 3 s; Change runs yellow, red clearance and the opposing
minimum green, 15 s in total.  Each step returns the queue and travel-time
observation and a reward built from queue length, delay, discharged flow and
vehicles stuck across consecutive steps.
"""

from signalbench.demand import DemandSchedule
from signalbench.env import EnvConfig, RewardInputs, SignalEnv, compute_penalty, compute_reward
from signalbench.signals import Action

# the reward on its own: -1*10 - 0.5*4 + 2*3 - 1*2
print("reward(10, 4, 3, S=2) =", compute_reward(RewardInputs(10, 4, 3, 2, counter=0)))
print("penalty after 10 extra keeps:", round(compute_penalty(10, 0.9), 5))

env = SignalEnv(env_config=EnvConfig(episode_length=300),
                demand=DemandSchedule.constant((400, 400, 900, 900)))
obs = env.reset(seed=3)
print("\nstart:", obs.queue, "group", env.sim.phase.active_group)

# hold the first green, then switch whenever the red side queues up more
while not env.terminal:
    q = obs.queue
    green_ns = env.sim.phase.active_group == "NS"
    waiting, serving = (q[2] + q[3], q[0] + q[1]) if green_ns else (q[0] + q[1], q[2] + q[3])
    action = Action.CHANGE if waiting > serving + 2 else Action.KEEP
    res = env.step(action)
    obs = res.observation
    print(f"t={env.clock:5.0f}  {res.action.name:6s} {res.elapsed:4.0f}s  "
          f"queue {obs.queue}  reward {res.reward:8.2f}  {res.note or ''}")
