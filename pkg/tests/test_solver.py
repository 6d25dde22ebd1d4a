import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bezierfit.bezier import FITTING, INTERPOLATION, CompositeBezier, free_slots, pack, unpack
from bezierfit.manifolds import Euclidean, Rotations, Sphere
from bezierfit.objective import (DiscretizationGrid, FittingProblem, default_initialization,
                                 gradient, objective)
from bezierfit.solver import (BACKTRACK_FAIL, MAX_ITER, MIN_CHANGE, MIN_GRAD_NORM,
                              ArmijoParams, BacktrackError, SolverCutLocusError,
                              StoppingCriteria, armijo_step, gradient_descent, product_norm,
                              solve, solve_pack)
from helpers import random_pair

S2 = Sphere(2)
E2 = Euclidean(2)


def euclidean_pack(points):
    """A fitting pack whose free points are ``points`` (one cubic segment)."""
    return pack(CompositeBezier(E2, np.asarray(points, float)[None]), FITTING)


def noisy_problem(M, seed, lam=2.0, n=3, N=30):
    rng = np.random.default_rng(seed)
    x = M.random_point(rng)
    data = [x]
    for _ in range(n):
        step = M.random_tangent(x, rng)
        x = M.exp(x, 0.7 * step / np.linalg.norm(step))
        data.append(x)
    problem = FittingProblem(M, np.array(data), lam, DiscretizationGrid(n, N))
    v = default_initialization(problem)
    eps = np.array([0.2 * M.random_tangent(p, rng) for p in v.points])
    return problem, v.with_points(M.exp(v.points, eps))


# -- Armijo --------------------------------------------------------------------

def test_armijo_accepts_unit_step_on_quadratic():
    v = euclidean_pack([[1.0, 2], [0, 1], [3, -1], [2, 2]])

    def half_sq(p):
        return 0.5 * float(np.sum(p.points**2))

    step, cand, fc = armijo_step(v, v.points, None, ArmijoParams(), value=half_sq)
    assert step == 1.0 and fc == 0.0 and np.all(cand.points == 0.0)


def test_armijo_backtracks_once_on_steep_quadratic():
    v = euclidean_pack([[1.0, 2], [0, 1], [3, -1], [2, 2]])

    def sq(p):
        return float(np.sum(p.points**2))

    # unit step lands on -x with no decrease; half step reaches the minimum
    step, _, fc = armijo_step(v, 2 * v.points, None, ArmijoParams(), value=sq)
    assert step == 0.5 and fc == 0.0


def test_armijo_respects_alpha_and_beta():
    v = euclidean_pack([[1.0, 2], [0, 1], [3, -1], [2, 2]])

    def sq(p):
        return float(np.sum(p.points**2))

    step, _, _ = armijo_step(v, 2 * v.points, None, ArmijoParams(alpha=8.0, beta=0.25),
                             value=sq)
    assert step == 0.5


@given(st.integers(0, 10_000))
@settings(max_examples=20)
def test_armijo_sufficient_decrease_holds(seed):
    problem, v = noisy_problem(S2, seed)
    params = ArmijoParams()
    g = gradient(v, problem)
    f0 = objective(v, problem).total
    step, cand, fc = armijo_step(v, g, problem, params)
    assert fc == objective(cand, problem).total
    assert f0 - fc >= params.sigma * step * product_norm(v, g) ** 2
    # m is minimal: the previous trial step (if any) fails the test
    if step < params.alpha:
        bigger = v.with_points(S2.exp(v.points, -(step / params.beta) * g))
        assert f0 - objective(bigger, problem).total < (
            params.sigma * (step / params.beta) * product_norm(v, g) ** 2)


def test_armijo_ascent_direction_fails():
    v = euclidean_pack([[1.0, 2], [0, 1], [3, -1], [2, 2]])
    with pytest.raises(BacktrackError):
        armijo_step(v, -v.points, None, ArmijoParams(max_backtracks=10),
                    value=lambda p: float(np.sum(p.points**2)))


def test_armijo_param_validation():
    for kw in (dict(beta=1.0), dict(sigma=0.0), dict(alpha=-1.0), dict(max_backtracks=0)):
        with pytest.raises(ValueError):
            ArmijoParams(**kw)


def test_product_norm():
    v = euclidean_pack(np.zeros((4, 2)))
    g = np.arange(8.0).reshape(4, 2)
    assert product_norm(v, g) == pytest.approx(np.linalg.norm(g))


# -- stopping ------------------------------------------------------------------

def test_stopping_defaults_per_manifold():
    assert StoppingCriteria.for_manifold(E2).min_change == 1e-15
    assert StoppingCriteria.for_manifold(S2).min_grad_norm == 1e-5
    assert StoppingCriteria.for_manifold(S2, max_iterations=7, min_change=None).max_iterations == 7


def test_geodesic_start_stops_immediately(manifold):
    x, y = random_pair(manifold, np.random.default_rng(0))
    pts = manifold.geodesic(x, y, np.linspace(0, 1, 7))
    B = CompositeBezier(manifold, np.array([pts[0:4], pts[3:7]]))
    problem = FittingProblem(manifold, B.junctions, 0.0, DiscretizationGrid(2, 20))
    v, trace = gradient_descent(problem, pack(B, FITTING),
                                stopping=StoppingCriteria(min_grad_norm=1e-8))
    assert trace.termination_reason == MIN_GRAD_NORM and trace.iterations == 0
    assert np.array_equal(v.points, pack(B, FITTING).points)


def test_max_iterations():
    problem, v = noisy_problem(S2, 1)
    _, trace = gradient_descent(problem, v, stopping=StoppingCriteria(max_iterations=3))
    assert trace.termination_reason == MAX_ITER and trace.iterations == 3


def test_min_change():
    problem, v = noisy_problem(S2, 2)
    _, trace = gradient_descent(problem, v, stopping=StoppingCriteria(
        max_iterations=10_000, min_change=1e-3, min_grad_norm=0.0))
    assert trace.termination_reason == MIN_CHANGE
    assert trace.records[-1].displacement < 1e-3
    assert all(r.displacement >= 1e-3 for r in trace.records[:-1])


@pytest.mark.parametrize("M", [E2, S2, Rotations()], ids=["E2", "S2", "SO3"])
def test_objective_is_monotone(M):
    problem, v = noisy_problem(M, 3)
    _, trace = gradient_descent(problem, v, stopping=StoppingCriteria(max_iterations=60))
    f = np.array(trace.objectives)
    assert np.all(np.diff(f) < 0)
    assert trace.final_objective == f[-1]


def test_corrupted_gradient_reports_backtrack_failure():
    problem, v = noisy_problem(S2, 4)

    def uphill(pack_, problem_):
        return -gradient(pack_, problem_)

    v_out, trace = gradient_descent(problem, v, armijo=ArmijoParams(max_backtracks=20),
                                    grad_fn=uphill)
    assert trace.termination_reason == BACKTRACK_FAIL and trace.iterations == 0
    assert np.array_equal(v_out.points, v.points)


def test_cut_locus_is_wrapped_with_iteration():
    data = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0]])
    problem = FittingProblem(S2, data, 1.0, DiscretizationGrid(2, 20))
    v = default_initialization(problem)
    # move b_0^- to the antipode of the shared junction so the C1 reflection breaks
    slots = free_slots(2, 3, FITTING)
    points = v.points.copy()
    points[slots.index((0, 2))] = -data[1]
    with pytest.raises(SolverCutLocusError) as info:
        gradient_descent(problem, v.with_points(points))
    assert info.value.iteration == 0


# -- solve ---------------------------------------------------------------------

def test_solve_fitting_and_interpolation():
    problem, _ = noisy_problem(S2, 5, lam=5.0)
    B, trace = solve(problem)
    assert trace.termination_reason in (MIN_CHANGE, MIN_GRAD_NORM)
    assert trace.final_objective < trace.initial_objective
    assert isinstance(B, CompositeBezier)

    interp = FittingProblem(S2, problem.data, np.inf, problem.grid)
    B, trace = solve(interp)
    assert np.max(S2.dist(B.junctions, problem.data)) <= 1e-12
    assert trace.final_objective < trace.initial_objective


def test_solve_pack_matches_solve():
    problem, v = noisy_problem(E2, 6)
    stop = StoppingCriteria(max_iterations=20)
    B, t1 = solve(problem, v, stopping=stop)
    v2, t2 = solve_pack(problem, v, stopping=stop)
    assert np.array_equal(B.controls, unpack(v2).controls)
    assert t1.objectives == t2.objectives


def test_solve_rejects_mode_mismatch():
    problem, v = noisy_problem(S2, 7)
    interp = FittingProblem(S2, problem.data, np.inf, problem.grid)
    assert v.mode == FITTING and interp.mode == INTERPOLATION
    with pytest.raises(ValueError, match="mode"):
        solve(interp, v)


def test_euclidean_fit_reaches_stationary_point():
    problem, v = noisy_problem(E2, 8, lam=3.0)
    v_out, trace = gradient_descent(problem, v, stopping=StoppingCriteria(
        max_iterations=20_000, min_change=0.0, min_grad_norm=1e-6))
    assert trace.termination_reason == MIN_GRAD_NORM
    assert product_norm(v_out, gradient(v_out, problem)) < 1e-6
