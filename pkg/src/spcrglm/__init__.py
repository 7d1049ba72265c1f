"""Sparse principal component regression for generalized linear models."""

from .family import FamilySpec, family_eval, log_likelihood, working_quantities
from .linalg import center_columns, procrustes_A, soft_threshold
from .optimizer import (
    Controls,
    FitResult,
    HyperParams,
    SpcrParams,
    fit,
    fit_adaptive,
    fit_multiclass,
    objective_value,
)

__version__ = "0.1.0"
