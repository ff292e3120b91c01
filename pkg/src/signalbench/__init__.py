"""Signal control at an isolated four-leg intersection.

A point-vehicle simulator with stop-bar and advance detectors, pre-timed and
actuated NEMA controllers, a Gym-style environment, and a small numpy DQN.
"""

from .demand import DemandSchedule, scenario_demand
from .dqn import DqnConfig, run_training
from .env import EnvConfig, RewardWeights, SignalEnv
from .experiments import ScenarioSpec, compare_controllers, run_scenario
from .neural import DenseNet, load_checkpoint, save_checkpoint
from .signals import Action, ActuatedController, PretimedController, TimingPlan
from .sim import SimConfig, Simulation

__all__ = [
    "Action", "ActuatedController", "DemandSchedule", "DenseNet", "DqnConfig",
    "EnvConfig", "PretimedController", "RewardWeights", "ScenarioSpec", "SignalEnv",
    "SimConfig", "Simulation", "TimingPlan", "compare_controllers", "load_checkpoint",
    "run_scenario", "run_training", "save_checkpoint", "scenario_demand",
]
__version__ = "0.1.0"
