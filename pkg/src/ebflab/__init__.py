"""Bias-constrained optimistic reinforcement learning for average-reward MDPs."""

from .agents import estimate_H, learn_diameter, run_ebf, run_ld, run_ucrl2
from .confidence import ConfidenceParams, tuple_in_M
from .envs import make_chain, make_garnet, make_riverswim, make_swap
from .errors import ConfigError, ConvergenceError, DiameterLearningError, InvalidInput
from .mdp import Mdp, diameter, flatten, load_mdp, solve_gain_bias
from .planners import ebf_plan, extended_value_iteration
from .trajectory import Trajectory, arrival_segments, l1_statistic

__all__ = [
    "ConfidenceParams", "ConfigError", "ConvergenceError", "DiameterLearningError", "InvalidInput", "Mdp",
    "Trajectory", "arrival_segments", "diameter", "ebf_plan", "estimate_H", "extended_value_iteration",
    "flatten", "l1_statistic", "learn_diameter", "load_mdp", "make_chain", "make_garnet", "make_riverswim",
    "make_swap", "run_ebf", "run_ld", "run_ucrl2", "solve_gain_bias", "tuple_in_M",
]
