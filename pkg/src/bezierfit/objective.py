"""Discretized mean squared acceleration and the fitting functional."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bezier import (FITTING, INTERPOLATION, CompositeBezier, VariablePack, c1_chain,
                     composite_backprop, composite_eval, gather_free, pack, unpack)
from .manifolds import Manifold, manifold_from_name

#: Weight on the summed squared second differences. With ``d2 = 2 dist(c, y)``
#: a weight of 1/4 is the same as squaring the plain midpoint distance
#: ``dist(c, y)``; the bundled experiment presets reproduce their reference
#: values under this convention.
DEFAULT_MSA_WEIGHT = 0.25


@dataclass(frozen=True)
class DiscretizationGrid:
    """``N + 1`` equispaced parameters on ``[0, n]``."""

    n: int
    N: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid needs at least one segment")
        if self.N < 2:
            raise ValueError("N: need at least two grid intervals")

    @property
    def dt(self) -> float:
        return self.n / self.N

    @property
    def times(self):
        t = np.arange(self.N + 1) * self.dt
        t[-1] = float(self.n)
        return t

    @property
    def junctions_on_grid(self) -> bool:
        return self.N % self.n == 0


@dataclass
class FittingProblem:
    manifold: Manifold
    data: np.ndarray
    lam: float
    grid: DiscretizationGrid
    degree: int = 3
    msa_weight: float = DEFAULT_MSA_WEIGHT

    def __post_init__(self):
        self.manifold = manifold_from_name(self.manifold)
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim < 1 or len(self.data) < 2:
            raise ValueError("data: need at least 2 points")
        self.manifold.batch_shape(self.data)
        self.lam = float(self.lam)
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.grid.n != self.n:
            raise ValueError(f"grid spans {self.grid.n} segments, data needs {self.n}")

    @property
    def n(self) -> int:
        return len(self.data) - 1

    @property
    def interpolating(self) -> bool:
        return np.isinf(self.lam)

    @property
    def mode(self) -> str:
        return INTERPOLATION if self.interpolating else FITTING


@dataclass(frozen=True)
class ObjectiveValue:
    total: float
    msa: float
    data_term: float


def second_order_diff(M: Manifold, x, y, z):
    """``2 dist(c, y)`` where ``c`` is the midpoint of the shortest geodesic
    from ``x`` to ``z``. Batched over leading axes."""
    c = M.geodesic(x, z, 0.5)
    return 2.0 * M.dist(c, y)


def grad_second_order_diff_sq(M: Manifold, x, y, z):
    """Gradients of ``second_order_diff(x, y, z)**2`` at ``x``, ``y`` and ``z``."""
    c = M.geodesic(x, z, 0.5)
    grad_c = -8.0 * M.log(c, y)
    grad_y = -8.0 * M.log(y, c)
    grad_x = M.adjoint_jacobi_field(x, z, 0.5, grad_c)
    grad_z = M.adjoint_jacobi_field_reversed(x, z, 0.5, grad_c)
    return grad_x, grad_y, grad_z


def msa(B: CompositeBezier, grid: DiscretizationGrid, weight=DEFAULT_MSA_WEIGHT):
    """Discretized mean squared acceleration of ``B`` on ``grid``."""
    if grid.n != B.n:
        raise ValueError(f"grid spans {grid.n} segments, curve has {B.n}")
    P = composite_eval(B, grid.times)
    d2 = second_order_diff(B.manifold, P[:-2], P[1:-1], P[2:])
    return weight * float(np.sum(d2**2)) / grid.dt**3


def msa_gradient_controls(B: CompositeBezier, grid: DiscretizationGrid,
                          weight=DEFAULT_MSA_WEIGHT):
    """Gradient of :func:`msa` with respect to every control point of ``B``,
    treating all of them as independent. Shape ``(n, K + 1, *tangent_shape)``."""
    M = B.manifold
    t = grid.times
    P = composite_eval(B, t)
    gx, gy, gz = grad_second_order_diff_sq(M, P[:-2], P[1:-1], P[2:])
    scale = weight / grid.dt**3
    cot = np.zeros((len(t),) + M.tangent_shape)
    cot[:-2] += gx
    cot[1:-1] += gy
    cot[2:] += gz
    return composite_backprop(B, t, scale * cot)


def data_term(problem: FittingProblem, junctions):
    return float(np.sum(problem.manifold.dist(problem.data, junctions) ** 2))


def objective(v: VariablePack, problem: FittingProblem) -> ObjectiveValue:
    B = unpack(v)
    a = msa(B, problem.grid, problem.msa_weight)
    if problem.interpolating:
        return ObjectiveValue(a, a, 0.0)
    dterm = data_term(problem, B.junctions)
    return ObjectiveValue(a + 0.5 * problem.lam * dterm, a, dterm)


def gradient(v: VariablePack, problem: FittingProblem):
    """Riemannian gradient of the objective, one tangent vector per free
    variable of ``v`` (shape ``(len(v.points), *tangent_shape)``)."""
    B = unpack(v)
    g = c1_chain(B, msa_gradient_controls(B, problem.grid, problem.msa_weight))
    if not problem.interpolating and problem.lam != 0.0:
        M = problem.manifold
        pull = -problem.lam * M.log(B.junctions, problem.data)
        g[0, 0] += pull[0]
        g[:, -1] += pull[1:]
    return gather_free(g, v.n, v.K, v.mode)


def first_order_diffs(B: CompositeBezier, grid: DiscretizationGrid):
    P = composite_eval(B, grid.times)
    return B.manifold.dist(P[:-1], P[1:]) / grid.dt


def default_initialization(problem: FittingProblem) -> VariablePack:
    """C1 starting curve through the data points.

    Junction tangents are centered differences of logarithms (one-sided at the
    ends); ``b_i^(+/-)`` sit a third of the way along them and additional inner
    control points of higher degrees are spaced along the geodesic between
    ``b_i^+`` and ``b_(i+1)^-``.
    """
    M, d, n, K = problem.manifold, problem.data, problem.n, problem.degree
    fwd = M.log(d[:-1], d[1:])
    bwd = M.log(d[1:], d[:-1])
    tangents = np.empty((n + 1,) + M.tangent_shape)
    tangents[0] = fwd[0]
    tangents[-1] = -bwd[-1]
    if n > 1:
        tangents[1:-1] = 0.5 * (fwd[1:] - bwd[:-1])
    plus = M.exp(d, tangents / 3.0)
    minus = M.exp(d, -tangents / 3.0)
    c = np.empty((n, K + 1) + M.point_shape)
    for i in range(n):
        c[i, 0], c[i, K] = d[i], d[i + 1]
        if K == 2:
            c[i, 1] = M.geodesic(plus[i], minus[i + 1], 0.5)
            continue
        c[i, 1], c[i, K - 1] = plus[i], minus[i + 1]
        for j in range(2, K - 1):
            c[i, j] = M.geodesic(plus[i], minus[i + 1], (j - 1) / (K - 2))
    B = CompositeBezier(M, c)
    return pack(B, problem.mode)
