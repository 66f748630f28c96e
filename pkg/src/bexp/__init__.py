"""Soft actor-critic with ensemble-uncertainty action selection and
model-based value expansion, in plain numpy."""

from .config import ALGOS, RunConfig, load_config, validate
from .envs import ENV_NAMES, evaluate_policy, make_env
from .errors import ConfigError, NumericalError, WarmupError
from .explore import ActionSelector, SelectorConfig, bounded_select, gibbs_probs, qu_select
from .harness import RunResult, aggregate, plot, run, smooth
from .mve import MveConfig, make_target_fn, mve_target
from .replay import Batch, ReplayBuffer, Transition
from .sac import SacAgent, SquashedGaussianPolicy, Temperature, TwinCritics
from .worldmodel import EnsemblePrediction, WorldModelEnsemble

__version__ = "0.1.0"

__all__ = [
    "ALGOS", "ENV_NAMES", "ActionSelector", "Batch", "ConfigError",
    "EnsemblePrediction", "MveConfig", "NumericalError", "ReplayBuffer",
    "RunConfig", "RunResult", "SacAgent", "SelectorConfig",
    "SquashedGaussianPolicy", "Temperature", "Transition", "TwinCritics",
    "WarmupError", "WorldModelEnsemble", "aggregate", "bounded_select",
    "evaluate_policy", "gibbs_probs", "load_config", "make_env",
    "make_target_fn", "mve_target", "plot", "qu_select", "run", "smooth",
    "validate", "__version__",
]
