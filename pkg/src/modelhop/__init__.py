"""Stochastic-search MCMC for Bayesian variable selection in linear regression."""

from .core import BACKEND
from .modelspace import InclusionVector, MoveType, MoveWeights, move_weights, toggle
from .scorer import Dataset, Hyperparams, ScoreCard, Scorer, standardize

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Dataset", "Hyperparams", "InclusionVector", "MoveType", "MoveWeights",
    "ScoreCard", "Scorer", "move_weights", "standardize", "toggle",
]
