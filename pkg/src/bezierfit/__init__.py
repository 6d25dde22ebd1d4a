"""Fitting C1 composite Bézier curves to data on Riemannian manifolds by
gradient descent on a discretized mean squared acceleration."""
from .bezier import (FITTING, INTERPOLATION, CompositeBezier, VariablePack, composite_eval,
                     decasteljau, enforce_c1, pack, unpack)
from .manifolds import (ConjugatePointError, CutLocusError, DimensionMismatch, Euclidean,
                        GeometryError, Manifold, Rotations, Sphere, manifold_from_name)
from .objective import (DiscretizationGrid, FittingProblem, default_initialization,
                        first_order_diffs, gradient, msa, objective)
from .solver import ArmijoParams, StoppingCriteria, gradient_descent, solve

__version__ = "0.1.0"

__all__ = [
    "FITTING", "INTERPOLATION", "CompositeBezier", "VariablePack", "composite_eval",
    "decasteljau", "enforce_c1", "pack", "unpack", "ConjugatePointError", "CutLocusError",
    "DimensionMismatch", "Euclidean", "GeometryError", "Manifold", "Rotations", "Sphere",
    "manifold_from_name", "DiscretizationGrid", "FittingProblem", "default_initialization",
    "first_order_diffs", "gradient", "msa", "objective", "ArmijoParams", "StoppingCriteria",
    "gradient_descent", "solve",
]
