"""Equation discovery systems: built-in GP, constant refitting, external processes."""

from .base import EdsModel, fit
from .external import ExternalModel, external_fit
from .gp import DEFAULT_OPERATORS, GpConfig, GpModel, seed_population
from .refit import RefitInfo, refit_constants

__all__ = [
    "EdsModel",
    "fit",
    "GpConfig",
    "GpModel",
    "DEFAULT_OPERATORS",
    "seed_population",
    "refit_constants",
    "RefitInfo",
    "ExternalModel",
    "external_fit",
]
