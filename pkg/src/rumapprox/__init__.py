"""Approximation of random utility models by mixtures of logits on finite menus."""

from .errors import DataError, NumericError
from .space import (
    Alternative,
    ChoiceSpace,
    StochasticChoice,
    build_space,
    distance,
    validate,
)

__all__ = [
    "Alternative",
    "ChoiceSpace",
    "DataError",
    "NumericError",
    "StochasticChoice",
    "build_space",
    "distance",
    "validate",
]

__version__ = "0.1.0"
