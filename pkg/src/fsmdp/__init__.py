"""Optimistic learning and planning in factored-state MDPs.

The learner keeps confidence sets over per-cluster marginals and rewards,
plans with a linear program over factored value-function weights whose
exponential constraint family is separated by variable elimination, and acts
greedily on the planned weights.
"""

from .config import ExperimentConfig, load_config, parse_config
from .core import Basis, BasisFunction, FactoredSpace, WeightMatrix
from .env import Environment, make_safe_action_family, make_two_state_env
from .errors import ConfigError, FsmdpError, InfeasibleError, InvariantError, ScaleError, SolverError
from .estimation import ConfidenceState, ModelStructure, true_model
from .learner import Learner, LearnerConfig, RegretTrace, run, theoretical_bound
from .optimism import OptimisticTables, build_tables, optimize_marginal
from .planner import Planner, SeparationOracle, evaluate_objective

__version__ = "0.1.0"

__all__ = [
    "Basis", "BasisFunction", "ConfidenceState", "ConfigError", "Environment", "ExperimentConfig",
    "FactoredSpace", "FsmdpError", "InfeasibleError", "InvariantError", "Learner", "LearnerConfig",
    "ModelStructure", "OptimisticTables", "Planner", "RegretTrace", "ScaleError", "SeparationOracle",
    "SolverError", "WeightMatrix", "build_tables", "evaluate_objective", "load_config",
    "make_safe_action_family", "make_two_state_env", "optimize_marginal", "parse_config", "run",
    "theoretical_bound", "true_model",
]
