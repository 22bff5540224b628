"""Learning agents that act on the simulator without the true error probabilities."""

from .checkpoint import load_checkpoint, save_checkpoint
from .dqn import DqnConfig, DqnGreedyPolicy, DqnResult, dqn_train, huber
from .mlp import MlpParams, adam_step, gradient_check, mlp_backward, mlp_forward
from .sarsa_lfa import SarsaSchedules, boltzmann_probs, boltzmann_sample, features, sarsa_lfa_run
from .ucrl2 import UcrlState, ucrl2_vi_run, ucrl2_whittle_run
