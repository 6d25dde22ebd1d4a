import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bezierfit.bezier import FITTING, INTERPOLATION, CompositeBezier, enforce_c1, pack, unpack
from bezierfit.manifolds import CutLocusError, Euclidean, Rotations, Sphere
from bezierfit.objective import (DEFAULT_MSA_WEIGHT, DiscretizationGrid, FittingProblem,
                                 data_term, default_initialization, first_order_diffs,
                                 grad_second_order_diff_sq, gradient, msa, objective,
                                 second_order_diff)
from helpers import MANIFOLDS, MANIFOLD_IDS, random_pair

seeds = st.integers(0, 2**32 - 1)
S2 = Sphere(2)
E3 = Euclidean(3)


def random_problem(M, rng, n=3, lam=3.0, K=3, N=24, noise=0.15):
    x = M.random_point(rng)
    data = [x]
    for _ in range(n):
        step = M.random_tangent(x, rng)
        x = M.exp(x, 0.8 * step / np.linalg.norm(step))
        data.append(x)
    problem = FittingProblem(M, np.array(data), lam, DiscretizationGrid(n, N), degree=K)
    v = default_initialization(problem)
    eps = np.array([noise * M.random_tangent(p, rng) for p in v.points])
    return problem, v.with_points(M.exp(v.points, eps))


def fd_gradient(problem, v, h=1e-6):
    """Central differences of the objective along an orthonormal basis at
    each free variable, expressed back as tangent vectors."""
    M = problem.manifold
    out = np.zeros((len(v.points),) + M.tangent_shape)
    for j, x in enumerate(v.points):
        for e in M.tangent_basis(x):
            plus, minus = v.points.copy(), v.points.copy()
            plus[j], minus[j] = M.exp(x, h * e), M.exp(x, -h * e)
            df = (objective(v.with_points(plus), problem).total
                  - objective(v.with_points(minus), problem).total) / (2 * h)
            out[j] += df * e
    return out


# -- second order differences --------------------------------------------------

@given(seeds)
@settings(max_examples=200)
def test_second_difference_euclidean(seed):
    x, y, z = np.random.default_rng(seed).standard_normal((3, 4)) * 3
    E = Euclidean(4)
    assert abs(second_order_diff(E, x, y, z) - np.linalg.norm(x - 2 * y + z)) <= 1e-12


def test_second_difference_euclidean_batch():
    x, y, z = np.random.default_rng(0).standard_normal((3, 1000, 3))
    err = np.abs(second_order_diff(E3, x, y, z) - np.linalg.norm(x - 2 * y + z, axis=-1))
    assert err.max() <= 1e-12


def test_second_difference_examples(manifold):
    x, z = random_pair(manifold, np.random.default_rng(1))
    mid = manifold.geodesic(x, z, 0.5)
    assert second_order_diff(manifold, x, mid, z) == pytest.approx(0.0, abs=1e-7)
    y = manifold.random_point(np.random.default_rng(2))
    assert second_order_diff(manifold, x, y, z) == pytest.approx(
        second_order_diff(manifold, z, y, x), abs=1e-12)


def test_second_difference_sphere_example():
    d2 = second_order_diff(S2, np.array([1.0, 0, 0]), np.array([0, 0, 1.0]),
                           np.array([0, 1.0, 0]))
    assert d2 == pytest.approx(np.pi)


def test_second_difference_gradient_euclidean():
    x, y, z = np.random.default_rng(3).standard_normal((3, 3))
    r = x - 2 * y + z
    gx, gy, gz = grad_second_order_diff_sq(E3, x, y, z)
    assert np.allclose(gx, 2 * r) and np.allclose(gy, -4 * r) and np.allclose(gz, 2 * r)


@pytest.mark.parametrize("M", MANIFOLDS, ids=MANIFOLD_IDS)
@given(seed=seeds)
@settings(max_examples=30)
def test_second_difference_gradient_matches_finite_differences(M, seed):
    rng = np.random.default_rng(seed)
    x, z = random_pair(M, rng, max_dist=1.5)
    c = M.geodesic(x, z, 0.5)
    y = M.exp(c, 0.3 * M.random_tangent(c, rng))
    grads = grad_second_order_diff_sq(M, x, y, z)
    pts = [x, y, z]
    for k in range(3):
        for e in M.tangent_basis(pts[k]):
            def f(s, k=k, e=e):
                moved = list(pts)
                moved[k] = M.exp(pts[k], s * e)
                return np.array([second_order_diff(M, *moved) ** 2])
            fd = (f(1e-6) - f(-1e-6))[0] / 2e-6
            assert M.inner(pts[k], grads[k], e) == pytest.approx(fd, abs=1e-5)


def test_gradient_vanishes_at_midpoint(manifold):
    x, z = random_pair(manifold, np.random.default_rng(4))
    for g in grad_second_order_diff_sq(manifold, x, manifold.geodesic(x, z, 0.5), z):
        assert np.linalg.norm(g) <= 1e-6


# -- grid and msa --------------------------------------------------------------

def test_grid():
    g = DiscretizationGrid(3, 12)
    assert g.dt == 0.25 and len(g.times) == 13 and g.times[-1] == 3.0
    assert g.junctions_on_grid and not DiscretizationGrid(3, 200).junctions_on_grid
    with pytest.raises(ValueError):
        DiscretizationGrid(3, 1)


def test_msa_of_geodesic_is_zero(manifold):
    x, y = random_pair(manifold, np.random.default_rng(5))
    ctrl = manifold.geodesic(x, y, np.linspace(0, 1, 4))
    B = CompositeBezier(manifold, ctrl[None])
    assert msa(B, DiscretizationGrid(1, 10)) <= 1e-12


def test_msa_weight_scales_linearly():
    rng = np.random.default_rng(6)
    c = rng.standard_normal((1, 4, 3))
    B = CompositeBezier(E3, c)
    g = DiscretizationGrid(1, 50)
    assert msa(B, g, 1.0) == pytest.approx(msa(B, g) / DEFAULT_MSA_WEIGHT)


def test_msa_grid_refinement_is_second_order():
    # quintic whose acceleration vanishes at both ends, so the omitted boundary
    # triples do not add a first order term
    E1 = Euclidean(1)
    B = CompositeBezier(E1, np.array([[[0.0], [0.0], [0.0], [1.0], [1.0], [1.0]]]))
    vals = [msa(B, DiscretizationGrid(1, N)) for N in (20, 40, 80, 160)]
    diffs = np.abs(np.diff(vals))
    ratios = diffs[:-1] / diffs[1:]
    assert np.all(np.abs(ratios - 4.0) <= 1.2)


def test_msa_euclidean_matches_integral_of_acceleration():
    # for cubic pieces, second differences are exact: msa ~ w * int |c''|^2
    rng = np.random.default_rng(7)
    ctrl = rng.standard_normal((4, 2))
    B = CompositeBezier(Euclidean(2), ctrl[None])
    # c''(t) = (1 - t) a + t b, so the integral of |c''|^2 is (|a|^2 + a.b + |b|^2) / 3
    a = 6 * (ctrl[2] - 2 * ctrl[1] + ctrl[0])
    b = 6 * (ctrl[3] - 2 * ctrl[2] + ctrl[1])
    integral = (a @ a + a @ b + b @ b) / 3
    value = msa(B, DiscretizationGrid(1, 4000), weight=1.0)
    assert value == pytest.approx(integral, rel=2e-3)


# -- objective and gradient ----------------------------------------------------

def test_objective_examples():
    rng = np.random.default_rng(8)
    problem, v = random_problem(S2, rng, lam=0.0)
    val = objective(v, problem)
    assert val.total == val.msa
    problem = FittingProblem(S2, problem.data, 7.0, problem.grid)
    v = default_initialization(problem)
    assert data_term(problem, unpack(v).junctions) == 0.0
    val = objective(v, problem)
    assert val.data_term == 0.0 and val.total == val.msa >= 0


def test_objective_data_term_weight():
    rng = np.random.default_rng(9)
    problem, v = random_problem(E3, rng, lam=4.0)
    val = objective(v, problem)
    assert val.total == pytest.approx(val.msa + 2.0 * val.data_term)


def test_problem_validation():
    with pytest.raises(ValueError, match="need at least 2 points"):
        FittingProblem(S2, np.zeros((1, 3)) + [0, 0, 1.0], 1.0, DiscretizationGrid(1, 4))
    with pytest.raises(ValueError, match="non-negative"):
        FittingProblem(E3, np.zeros((2, 3)), -1.0, DiscretizationGrid(1, 4))
    with pytest.raises(ValueError, match="segments"):
        FittingProblem(E3, np.zeros((3, 3)), 1.0, DiscretizationGrid(1, 4))


@pytest.mark.parametrize("M", MANIFOLDS, ids=MANIFOLD_IDS)
@pytest.mark.parametrize("lam", [3.0, np.inf])
@pytest.mark.parametrize("K", [2, 3, 4])
def test_gradient_matches_finite_differences(M, lam, K):
    problem, v = random_problem(M, np.random.default_rng(10 + K), lam=lam, K=K)
    g = gradient(v, problem)
    fd = fd_gradient(problem, v)
    tol = 1e-6 if M.kind == "Euclidean" else 1e-4
    assert np.linalg.norm(g - fd) <= tol * np.linalg.norm(fd)


def test_gradient_off_grid_junctions():
    problem, v = random_problem(S2, np.random.default_rng(11), N=25)
    assert not problem.grid.junctions_on_grid
    g, fd = gradient(v, problem), fd_gradient(problem, v)
    assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(fd)


def test_gradient_at_geodesic_vanishes(manifold):
    x, y = random_pair(manifold, np.random.default_rng(12))
    ctrl = manifold.geodesic(x, y, np.linspace(0, 1, 7))
    c = np.array([ctrl[0:4], ctrl[3:7]])
    B = CompositeBezier(manifold, c)
    problem = FittingProblem(manifold, B.junctions, 0.0, DiscretizationGrid(2, 20))
    g = gradient(pack(B, FITTING), problem)
    assert np.sqrt(np.sum(g * g)) <= 1e-10


# -- first order differences and initialization --------------------------------

def test_first_order_differences():
    B = CompositeBezier(E3, np.array([[[0, 0, 0.0], [1 / 3, 0, 0], [2 / 3, 0, 0], [1.0, 0, 0]]]))
    fo = first_order_diffs(B, DiscretizationGrid(1, 10))
    assert np.allclose(fo, 1.0)
    x, y = random_pair(S2, np.random.default_rng(13))
    ctrl = S2.geodesic(x, y, np.linspace(0, 1, 4))
    fo = first_order_diffs(CompositeBezier(S2, ctrl[None]), DiscretizationGrid(1, 10))
    assert np.allclose(fo, fo[0], atol=1e-12)


def test_default_initialization_collinear():
    data = np.array([[i, 2.0 * i, 0.0] for i in range(4)])
    problem = FittingProblem(E3, data, 1.0, DiscretizationGrid(3, 30))
    B = unpack(default_initialization(problem))
    assert msa(B, problem.grid) <= 1e-20


@pytest.mark.parametrize("K", [2, 3, 4, 6])
def test_default_initialization_is_c1(manifold, K):
    rng = np.random.default_rng(14)
    problem, _ = random_problem(manifold, rng, K=K)
    for mode_lam in (2.0, np.inf):
        problem = FittingProblem(manifold, problem.data, mode_lam, problem.grid, degree=K)
        v = default_initialization(problem)
        B = unpack(v)
        assert v.mode == (INTERPOLATION if np.isinf(mode_lam) else FITTING)
        assert np.max(np.abs(enforce_c1(B).controls - B.controls)) <= 1e-12
        assert np.max(manifold.dist(B.junctions, problem.data)) <= 1e-12


def test_default_initialization_antipodal_raises():
    problem = FittingProblem(S2, np.array([[0, 0, 1.0], [0, 0, -1.0]]), 1.0,
                             DiscretizationGrid(1, 8))
    with pytest.raises(CutLocusError):
        default_initialization(problem)


def test_coincident_data_gives_constant_curve():
    p = np.array([0, 0, 1.0])
    problem = FittingProblem(S2, np.array([p, p]), 1.0, DiscretizationGrid(1, 8))
    B = unpack(default_initialization(problem))
    assert np.allclose(B.controls, p) and msa(B, problem.grid) == 0.0


def test_rotations_gradient_random_problem():
    problem, v = random_problem(Rotations(), np.random.default_rng(15), n=2)
    g, fd = gradient(v, problem), fd_gradient(problem, v)
    assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(fd)


def test_rotation_msa_matches_quaternion_route():
    # unit quaternions double-cover SO(3) with dist_SO3 = 2 dist_S3, so the
    # same curve written in quaternions has a quarter of the msa
    from scipy.spatial.transform import Rotation as R
    problem, v = random_problem(Rotations(), np.random.default_rng(16), n=2, N=40)
    B = unpack(v)
    q = R.from_matrix(B.controls.reshape(-1, 3, 3)).as_quat()
    for i in range(1, len(q)):
        if q[i] @ q[i - 1] < 0:
            q[i] = -q[i]
    Bq = CompositeBezier(Sphere(3), q.reshape(B.controls.shape[:2] + (4,)))
    assert msa(B, problem.grid) == pytest.approx(4 * msa(Bq, problem.grid), rel=1e-10)
