"""Tabular RL laboratory for robust stochastic operators and their Bellman baselines."""

__version__ = "0.1.0"

from .mdp import TabularMdp, exact_q_star, load_mdp, m2, random_corpus, random_mdp, save_mdp
from .operators import (
    Bellman,
    Constant,
    Consistent,
    PiecewiseSchedule,
    Rso,
    UniformHalfOpen,
    parse_beta_spec,
    parse_operator,
)

__all__ = [
    "Bellman",
    "Consistent",
    "Constant",
    "PiecewiseSchedule",
    "Rso",
    "TabularMdp",
    "UniformHalfOpen",
    "__version__",
    "exact_q_star",
    "load_mdp",
    "m2",
    "parse_beta_spec",
    "parse_operator",
    "random_corpus",
    "random_mdp",
    "save_mdp",
]
