"""Tabular multi-objective Q(lambda) learning under thresholded lexicographic ordering."""

from .agents import (
    ALGORITHMS,
    AgentConfig,
    BaselineExpectedMOQL,
    BasicMOQL,
    MossAgent,
    OptionsAgent,
    TwoPhaseMossAgent,
)
from .core import (
    InvalidConfiguration,
    InvalidInput,
    RewardVector,
    Schedule,
    TloUtility,
    tlo_argmax,
    tlo_clip,
    tlo_compare,
)
from .envs import ENVIRONMENTS, MomdpModel, load_model, dump_model, make_environment
from .harness import ExperimentSpec, run_experiment, summarize
from .oracle import evaluate_all, evaluate_policy, ser_optimal

__version__ = "0.1.0"
