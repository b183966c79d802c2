"""Approximate Bayesian learning in dynamic Bayesian networks.

Exact Gaussian belief propagation on junction trees, moment-matched DGLM
updates for non-Gaussian observations, and Hellinger-distance diagnostics
of the approximation, checked against deterministic numerical oracles.
"""
from .dglm import LogNormal, Normal, Poisson, update, update_lognormal, update_normal, update_poisson
from .divergence import (error_bound, hellinger_mvn, hellinger_normal_gamma,
                         hellinger_normal_normal, quadrature_hellinger, variation_bounds)
from .errors import (AccuracyError, AccuracyWarning, ConditioningError, DegenerateDesignError,
                     DomainError, DynbnError, ModelMismatchError, ScenarioError, StructuralError)
from .filter import Trajectory, run
from .gauss_bp import CliqueBelief, TreeBelief, absorb, collect_distribute
from .graph import Dag, JunctionTree, build_junction_tree, moralize, triangulate
from .scenario import Scenario, generate, load, parse

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "AccuracyWarning", "CliqueBelief", "ConditioningError", "Dag",
    "DegenerateDesignError", "DomainError", "DynbnError", "JunctionTree", "LogNormal",
    "ModelMismatchError", "Normal", "Poisson", "Scenario", "ScenarioError", "StructuralError",
    "Trajectory", "TreeBelief", "absorb", "build_junction_tree", "collect_distribute",
    "error_bound", "generate", "hellinger_mvn", "hellinger_normal_gamma",
    "hellinger_normal_normal", "load", "moralize", "parse", "quadrature_hellinger", "run",
    "triangulate", "update", "update_lognormal", "update_normal", "update_poisson",
    "variation_bounds",
]
