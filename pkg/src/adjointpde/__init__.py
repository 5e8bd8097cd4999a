"""Adjoint-based identification of PDE coefficients from snapshot data."""

from .core import (
    Boundary,
    CoefficientVector,
    Dataset,
    Field,
    Grid,
    Hyperparameters,
    TermKey,
    TermLibrary,
    build_library,
    coefficient_l1_error,
    ranged_library,
)
from .datagen import Problem, ProblemSpec, generate, recommended_hyperparameters
from .metrics import l2_residual, stagnation_flag, tpr
from .optimize import DiscoveryReport, Flag, apply_threshold, discover, learning_rate, suggest_beta, update_step

__version__ = "0.1.0"
