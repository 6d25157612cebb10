"""Sparse contextual linear bandits with an l1 confidence ball around a LASSO center."""

from .core import (
    ConfigurationError,
    ContextRound,
    NumericError,
    Observation,
    RegretTrace,
    TrueModel,
    best_arm,
    instant_regret,
)
from .solvers import BACKEND, DesignState, LassoSolution, design_update, kkt_residual, lasso_solve, ridge_solve

__version__ = "0.1.0"
