"""Preset problems with known reference outcomes.

Each preset builds its problems and initial curves from explicit constants,
runs the solver and returns the runs together with a list of checks that
compare achieved numbers against reference values.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bezier import CompositeBezier, composite_eval, pack, unpack
from .manifolds import Euclidean, Rotations, Sphere
from .objective import (DiscretizationGrid, FittingProblem, default_initialization,
                        first_order_diffs, objective)
from .solver import ArmijoParams, StoppingCriteria, gradient_descent

SQRT2 = np.sqrt(2.0)
SQRT6 = np.sqrt(6.0)

# Grid sizes count intervals; the sample count is one more.
EUCLIDEAN_INTERVALS = 1600
SPHERE_INTERVALS = 200
SO3_INTERVALS = 400

EUCLIDEAN_STOPPING = StoppingCriteria(max_iterations=100_000, min_change=1e-15,
                                      min_grad_norm=1e-9)
CURVED_STOPPING = StoppingCriteria(max_iterations=10_000, min_change=1e-7,
                                   min_grad_norm=1e-5)
# Small lambda values converge very slowly; the curvature of the fit has
# long settled below the reference bounds after a few hundred iterations.
SWEEP_STOPPING = StoppingCriteria(max_iterations=1000, min_change=1e-7,
                                  min_grad_norm=1e-5)


@dataclass
class Check:
    """One comparison between an achieved number and its reference.

    ``kind`` is ``abs`` (|a - r| <= tol), ``rel`` (|a - r| <= tol |r|),
    ``max`` (a <= tol), ``less`` (a < r) or ``info`` (not asserted).
    """

    name: str
    achieved: float
    reference: float | None
    tolerance: float | None
    kind: str

    @property
    def passed(self) -> bool | None:
        a, r, tol = self.achieved, self.reference, self.tolerance
        if self.kind == "abs":
            return bool(abs(a - r) <= tol)
        if self.kind == "rel":
            return bool(abs(a - r) <= tol * abs(r))
        if self.kind == "max":
            return bool(a <= tol)
        if self.kind == "less":
            return bool(a < r)
        return None

    def row(self):
        return {"check": self.name, "achieved": self.achieved, "reference": self.reference,
                "tolerance": self.tolerance, "kind": self.kind, "passed": self.passed}


@dataclass
class Run:
    label: str
    problem: FittingProblem
    init: CompositeBezier
    curve: CompositeBezier
    trace: object


@dataclass
class ExperimentResult:
    name: str
    runs: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)


def run_problem(label, problem, init: CompositeBezier | None = None,
                stopping=CURVED_STOPPING, armijo=ArmijoParams()) -> Run:
    v0 = default_initialization(problem) if init is None else pack(init, problem.mode)
    v, trace = gradient_descent(problem, v0, armijo, stopping)
    return Run(label, problem, unpack(v0), unpack(v), trace)


def _reflected(M, b, p):
    return M.geodesic(b, p, 2.0)


def _cubic_from_tangents(M, data, out_first, in_second, out_second, in_last):
    """Three cubic segments from tangent vectors at the junctions.

    ``out_first`` sits at ``data[0]``, ``in_last`` at ``data[3]``; the inner
    vectors give ``b_1^+`` and ``b_2^+`` while ``b_1^-`` and ``b_2^-`` follow
    from the C1 reflection through the junction.
    """
    b0p = M.exp(data[0], out_first)
    b1p = M.exp(data[1], in_second)
    b2p = M.exp(data[2], out_second)
    b3m = M.exp(data[3], in_last)
    b1m = _reflected(M, b1p, data[1])
    b2m = _reflected(M, b2p, data[2])
    c = np.array([[data[0], b0p, b1m, data[1]],
                  [data[1], b1p, b2m, data[2]],
                  [data[2], b2p, b3m, data[3]]])
    return CompositeBezier(M, c)


# -- three-segment example in R^3 and on S^2 ----------------------------------

UNIT_DATA = np.array([[0.0, 0.0, 1.0],
                      [0.0, -1.0, 0.0],
                      [-1.0, 0.0, 0.0],
                      np.array([0.0, -1.0, -9.0]) / np.sqrt(82.0)])

# Inner vectors use pi / (4 sqrt 2); see the decisions log for the scale.
UNIT_VECTORS = (np.pi / (8 * SQRT2) * np.array([1.0, -1.0, 0.0]),
                -np.pi / (4 * SQRT2) * np.array([1.0, 0.0, 1.0]),
                np.pi / (4 * SQRT2) * np.array([0.0, 1.0, -1.0]),
                np.pi / 8 * np.array([-1.0, 0.0, 0.0]))


def unit_curve(M):
    return _cubic_from_tangents(M, UNIT_DATA, *UNIT_VECTORS)


# -- lambda sweep on S^2 -------------------------------------------------------

SWEEP_DATA = np.array([[0.0, 0.0, 1.0],
                       [0.0, -1.0, 0.0],
                       [-1.0, 0.0, 0.0],
                       [0.0, 0.0, -1.0]])

SWEEP_VECTORS = (np.pi / (8 * SQRT2) * np.array([1.0, -1.0, 0.0]),
                 -np.pi / (4 * SQRT2) * np.array([-1.0, 0.0, 1.0]),
                 np.pi / (4 * SQRT2) * np.array([0.0, 1.0, -1.0]),
                 -np.pi / (8 * SQRT2) * np.array([-1.0, 1.0, 0.0]))

SWEEP_LAMBDAS = (np.inf, 10.0, 1.0, 0.1, 0.01, 0.001, 0.0)

# (reference, tolerance, kind) for the MSA of each minimizer
SWEEP_REFERENCE = {
    np.inf: (4.1339, 0.05, "rel"),
    10.0: (1.6592, 0.05, "rel"),
    1.0: (0.0733, 0.05, "rel"),
    0.1: (0.0010, 2e-3, "max"),
    0.01: (1.0814e-5, 5e-5, "max"),
    0.001: (1.6240e-7, 1e-6, "max"),
    0.0: (3.5988e-9, 1e-7, "max"),
}


def sweep_curve():
    return _cubic_from_tangents(Sphere(2), SWEEP_DATA, *SWEEP_VECTORS)


# -- two-segment geodesic on S^2 -----------------------------------------------

GEODESIC_DATA = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])


def geodesic_curve():
    M = Sphere(2)
    p0, p1, p2 = GEODESIC_DATA
    x0 = np.array([1.0, 1.0, 2.0]) / SQRT6
    x2 = np.array([-1.0, 1.0, -2.0]) / SQRT6
    b0p = M.exp(p0, 3.0 * M.log(p0, x0))
    b1m = np.array([1.0, 2.0, 1.0]) / SQRT6
    b1p = np.array([-1.0, 2.0, -1.0]) / SQRT6
    # log_{p0} x2 has no z component, so it is tangent at the south pole too
    b2m = M.exp(p2, M.log(p0, x2) / 3.0)
    return CompositeBezier(M, np.array([[p0, b0p, b1m, p1], [p1, b1p, b2m, p2]]))


def great_circle_deviation(points):
    """Distance of sphere points to the great circle in the plane x = 0."""
    return np.abs(np.arcsin(np.clip(points[..., 0], -1.0, 1.0)))


# -- orientations in SO(3) -----------------------------------------------------

def rot_xy(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_xz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_yz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def so3_data():
    pi = np.pi
    return np.array([
        rot_xy(4 * pi / 9) @ rot_yz(-pi / 2),
        rot_xz(-pi / 8) @ rot_xy(pi / 18) @ rot_yz(-pi / 2),
        rot_xy(5 * pi / 9) @ rot_yz(-pi / 2),
    ])


# -- runners -------------------------------------------------------------------

def _initial_value(run):
    return run.trace.initial_objective


def euclidean_validation(max_iter=None, eps=None, grad_eps=None) -> ExperimentResult:
    M = Euclidean(3)
    problem = FittingProblem(M, UNIT_DATA, 50.0,
                             DiscretizationGrid(3, EUCLIDEAN_INTERVALS))
    stop = _override(EUCLIDEAN_STOPPING, max_iter, eps, grad_eps)
    run = run_problem("lambda_50", problem, unit_curve(M), stop)
    res = ExperimentResult("euclidean-validation", [run])
    res.checks += [
        Check("initial_objective", _initial_value(run), 18.8828, 0.01, "abs"),
        Check("final_objective", run.trace.final_objective, 4.9812, 0.05, "abs"),
        _monotone_check(run),
    ]
    return res


def sphere_geodesic(max_iter=None, eps=None, grad_eps=None) -> ExperimentResult:
    M = Sphere(2)
    problem = FittingProblem(M, GEODESIC_DATA, np.inf,
                             DiscretizationGrid(2, SPHERE_INTERVALS))
    run = run_problem("interpolation", problem, geodesic_curve(),
                      _override(CURVED_STOPPING, max_iter, eps, grad_eps))
    pts = composite_eval(run.curve, problem.grid.times)
    fo = first_order_diffs(run.curve, problem.grid)
    res = ExperimentResult("sphere-geodesic", [run])
    res.checks += [
        Check("max_geodesic_deviation", float(np.max(great_circle_deviation(pts))),
              2.2357e-6, 1e-4, "max"),
        Check("first_order_diff_spread", float((fo.max() - fo.min()) / fo.mean()),
              0.0, 1e-3, "max"),
        _monotone_check(run),
    ]
    return res


def sphere_lambda_sweep(max_iter=None, eps=None, grad_eps=None,
                        lambdas=SWEEP_LAMBDAS) -> ExperimentResult:
    M = Sphere(2)
    init = sweep_curve()
    grid = DiscretizationGrid(3, SPHERE_INTERVALS)
    stop = _override(SWEEP_STOPPING, max_iter, eps, grad_eps)
    res = ExperimentResult("sphere-lambda-sweep")
    for lam in lambdas:
        problem = FittingProblem(M, SWEEP_DATA, lam, grid)
        run = run_problem(f"lambda_{_lambda_label(lam)}", problem, init, stop)
        res.runs.append(run)
        value = objective(pack(run.curve, problem.mode), problem)
        ref, tol, kind = SWEEP_REFERENCE.get(lam, (None, None, "info"))
        res.checks.append(Check(f"msa[lambda={_lambda_label(lam)}]", value.msa, ref,
                                tol, kind))
        res.checks.append(_monotone_check(run))
    first = res.runs[0]
    # the unoptimized curve does not depend on lambda (data term vanishes at p_i = d_i)
    res.checks.insert(0, Check("initial_objective", _initial_value(first), 10.6122, 0.01,
                               "abs"))
    return res


def sphere_compare(max_iter=None, eps=None, grad_eps=None) -> ExperimentResult:
    M = Sphere(2)
    problem = FittingProblem(M, UNIT_DATA, 10.0, DiscretizationGrid(3, SPHERE_INTERVALS))
    run = run_problem("lambda_10", problem, unit_curve(M),
                      _override(CURVED_STOPPING, max_iter, eps, grad_eps))
    res = ExperimentResult("sphere-compare", [run])
    res.checks += [
        Check("initial_objective", _initial_value(run), 10.9103, 0.01, "abs"),
        Check("final_objective", run.trace.final_objective, 2.7908, 2.85, "max"),
        _monotone_check(run),
    ]
    return res


def so3_orientations(max_iter=None, eps=None, grad_eps=None) -> ExperimentResult:
    problem = FittingProblem(Rotations(), so3_data(), 10.0,
                             DiscretizationGrid(2, SO3_INTERVALS))
    run = run_problem("lambda_10", problem, None,
                      _override(CURVED_STOPPING, max_iter, eps, grad_eps))
    res = ExperimentResult("so3-orientations", [run])
    res.checks += [
        Check("final_objective", run.trace.final_objective, 0.2909, 0.31, "max"),
        Check("final_below_initial", run.trace.final_objective, _initial_value(run),
              None, "less"),
        Check("initial_objective_vs_baseline", _initial_value(run), 0.6464, None, "info"),
        _monotone_check(run),
    ]
    return res


EXPERIMENTS = {
    "euclidean-validation": euclidean_validation,
    "sphere-geodesic": sphere_geodesic,
    "sphere-lambda-sweep": sphere_lambda_sweep,
    "sphere-compare": sphere_compare,
    "so3-orientations": so3_orientations,
}


def run_experiment(name, **overrides) -> ExperimentResult:
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; available: {', '.join(EXPERIMENTS)}")
    return EXPERIMENTS[name](**overrides)


def _lambda_label(lam):
    return "inf" if np.isinf(lam) else f"{lam:g}"


def _override(stop, max_iter, eps, grad_eps):
    return StoppingCriteria(
        max_iterations=stop.max_iterations if max_iter is None else max_iter,
        min_change=stop.min_change if eps is None else eps,
        min_grad_norm=stop.min_grad_norm if grad_eps is None else grad_eps)


def _monotone_check(run):
    obj = np.asarray(run.trace.objectives, dtype=float)
    increases = int(np.sum(np.diff(obj) >= 0)) if len(obj) > 1 else 0
    return Check(f"objective_increases[{run.label}]", float(increases), 0.0, 0.0, "max")
