"""Simulation and exact-verification toolkit for the stochastic six-vertex model."""

from .core import HOLE, NEG_INF, InvalidParameterError, ModelParams, RandomField, derive_params

__version__ = "0.1.0"

__all__ = ["HOLE", "NEG_INF", "InvalidParameterError", "ModelParams", "RandomField", "derive_params"]
