"""Model, kernel, state spaces and simulator."""

from .kernel import error_prob, fr_block_step, step, transition_distribution, valid_actions
from .model import (
    Action,
    ActionKind,
    CostSample,
    Feedback,
    FrHarq,
    GeneralHarq,
    ModelConfig,
    Outcome,
    StandardArq,
    SystemState,
    all_actions,
    n_actions,
)
from .sim import Env, RunTrace, simulate
from .spaces import StateSpace, enumerate_states
from .tabular import TabularModel, build_tabular
