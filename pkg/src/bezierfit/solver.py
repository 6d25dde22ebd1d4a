"""Riemannian gradient descent with Armijo backtracking on the product of
free control points."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bezier import CompositeBezier, VariablePack, unpack
from .manifolds import CutLocusError
from .objective import FittingProblem, default_initialization, gradient, objective

logger = logging.getLogger(__name__)

MAX_ITER = "MaxIter"
MIN_CHANGE = "MinChange"
MIN_GRAD_NORM = "MinGradNorm"
BACKTRACK_FAIL = "BacktrackFail"


class BacktrackError(RuntimeError):
    """No step size satisfied the sufficient decrease condition."""


class SolverCutLocusError(CutLocusError):
    def __init__(self, message, iteration, index=None):
        super().__init__(message, index)
        self.iteration = iteration


@dataclass(frozen=True)
class ArmijoParams:
    beta: float = 0.5
    sigma: float = 1e-4
    alpha: float = 1.0
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.beta < 1 or not 0 < self.sigma < 1:
            raise ValueError("beta and sigma must lie in (0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be at least 1")


@dataclass(frozen=True)
class StoppingCriteria:
    max_iterations: int = 10_000
    min_change: float = 1e-7
    min_grad_norm: float = 1e-5

    def __post_init__(self):
        if not (np.isfinite(self.max_iterations) or self.min_change > 0
                or self.min_grad_norm > 0):
            raise ValueError("at least one stopping criterion must be active")

    @classmethod
    def for_manifold(cls, manifold, **overrides):
        """Tight tolerances in Euclidean space, relaxed ones on curved manifolds."""
        if manifold.kind == "Euclidean":
            base = dict(min_change=1e-15, min_grad_norm=1e-9)
        else:
            base = dict(min_change=1e-7, min_grad_norm=1e-5)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


@dataclass
class IterationRecord:
    k: int
    objective: float
    grad_norm: float
    step_size: float
    displacement: float


@dataclass
class SolverTrace:
    records: list = field(default_factory=list)
    termination_reason: str | None = None
    initial_objective: float | None = None
    final_grad_norm: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def objectives(self):
        return [self.initial_objective] + [r.objective for r in self.records]

    @property
    def final_objective(self):
        return self.records[-1].objective if self.records else self.initial_objective

    def rows(self):
        return [(r.k, r.objective, r.grad_norm, r.step_size, r.displacement)
                for r in self.records]


def product_norm(v: VariablePack, grad) -> float:
    """Norm on the product manifold: l2 combination of component norms."""
    return float(np.sqrt(np.sum(v.manifold.inner(v.points, grad, grad))))


def retract(v: VariablePack, grad, step) -> VariablePack:
    return v.with_points(v.manifold.exp(v.points, -step * np.asarray(grad)))


def armijo_step(v: VariablePack, grad, problem, params=ArmijoParams(), f0=None,
                value=None):
    """Armijo step size ``beta**m * alpha`` for the smallest ``m >= 0`` with
    sufficient decrease along the negative gradient.

    Returns ``(step, candidate_pack, candidate_value)``. ``value`` evaluates
    the objective (defaults to the total of :func:`objective`).
    """
    if value is None:
        def value(pack):
            return objective(pack, problem).total
    if f0 is None:
        f0 = value(v)
    gnorm2 = product_norm(v, grad) ** 2
    step = params.alpha
    for _ in range(params.max_backtracks + 1):
        cand = retract(v, grad, step)
        fc = value(cand)
        if f0 - fc >= params.sigma * step * gnorm2:
            return step, cand, fc
        step *= params.beta
    raise BacktrackError(f"no sufficient decrease after {params.max_backtracks} backtracks")


def gradient_descent(problem: FittingProblem, init: VariablePack,
                     armijo=ArmijoParams(), stopping=StoppingCriteria(),
                     grad_fn=None):
    """Run gradient descent from ``init``; returns ``(pack, trace)``."""
    grad_fn = grad_fn or gradient
    M = problem.manifold
    v = init
    trace = SolverTrace()
    k = 0
    try:
        f = objective(v, problem).total
        trace.initial_objective = f
        while True:
            g = grad_fn(v, problem)
            gnorm = product_norm(v, g)
            trace.final_grad_norm = gnorm
            if gnorm < stopping.min_grad_norm:
                trace.termination_reason = MIN_GRAD_NORM
                break
            if k >= stopping.max_iterations:
                trace.termination_reason = MAX_ITER
                break
            try:
                step, new, f_new = armijo_step(v, g, problem, armijo, f0=f)
            except BacktrackError:
                trace.termination_reason = BACKTRACK_FAIL
                break
            if not f_new < f:
                raise AssertionError(f"objective increased at iteration {k + 1}")
            k += 1
            disp = float(np.sum(M.dist(v.points, new.points)))
            trace.records.append(IterationRecord(k, f_new, gnorm, step, disp))
            v, f = new, f_new
            if disp < stopping.min_change:
                trace.termination_reason = MIN_CHANGE
                break
    except CutLocusError as err:
        raise SolverCutLocusError(f"iteration {k}: {err}", k, err.index) from err
    logger.debug("stopped after %d iterations: %s", k, trace.termination_reason)
    return v, trace


def solve(problem: FittingProblem, init: VariablePack | None = None,
          armijo=ArmijoParams(), stopping=None):
    """Fit (or interpolate, for infinite lambda) and return the curve and trace."""
    if init is None:
        init = default_initialization(problem)
    if init.mode != problem.mode:
        raise ValueError(f"initial pack is in {init.mode} mode, problem needs {problem.mode}")
    if stopping is None:
        stopping = StoppingCriteria.for_manifold(problem.manifold)
    v, trace = gradient_descent(problem, init, armijo, stopping)
    return unpack(v), trace


def solve_pack(problem, init=None, armijo=ArmijoParams(), stopping=None):
    """Like :func:`solve` but returns the optimized pack."""
    if init is None:
        init = default_initialization(problem)
    if stopping is None:
        stopping = StoppingCriteria.for_manifold(problem.manifold)
    return gradient_descent(problem, init, armijo, stopping)


__all__ = ["ArmijoParams", "StoppingCriteria", "SolverTrace", "IterationRecord",
           "armijo_step", "gradient_descent", "solve", "solve_pack", "product_norm",
           "BacktrackError", "SolverCutLocusError", "CompositeBezier"]
