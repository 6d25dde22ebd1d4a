"""Closed-form geometry on Euclidean space, the unit sphere and SO(3).

All operations are vectorized: points carry arbitrary leading batch axes
followed by the manifold's ``point_shape``; tangent vectors carry the same
batch axes followed by ``tangent_shape``. Interpolation parameters ``t`` may
be scalars or arrays broadcasting against the batch axes.

Tangent vectors on SO(3) are stored in left-trivialized axis form: the
3-vector ``w`` stands for the matrix tangent ``x @ hat(w)`` at ``x``. With
the metric ``<U, V>_x = tr((x^T U)^T (x^T V)) / 2`` this makes the inner
product the plain dot product of axis vectors, and ``dist(I, R(theta)) =
theta``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CUT_LOCUS_TOL = 1e-9
DEGENERATE_TOL = 1e-12
CONJUGATE_TOL = 1e-12


class GeometryError(ValueError):
    """Base class for failures of manifold primitives."""


class CutLocusError(GeometryError):
    """The logarithm is undefined: the target lies on the cut locus."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConjugatePointError(GeometryError):
    """A Jacobi field coefficient has a vanishing denominator."""


class DimensionMismatch(GeometryError):
    pass


def _first_bad(mask):
    flat = np.flatnonzero(np.asarray(mask).ravel())
    return int(flat[0]) if flat.size else None


def _expand(t, ndim):
    """Append ``ndim`` trailing axes to ``t`` so it broadcasts over vectors."""
    t = np.asarray(t, dtype=float)
    return t.reshape(t.shape + (1,) * ndim)


def _size_tuple(size):
    return (int(size),) if np.ndim(size) == 0 and size != () else tuple(size)


def _dot(u, v):
    return np.sum(u * v, axis=-1)


@dataclass(frozen=True)
class CurvatureFrame:
    """Orthonormal basis at ``base`` diagonalizing ``R(., u)u`` for the
    geodesic direction ``u = directions[0]``."""

    base: np.ndarray
    directions: np.ndarray
    eigenvalues: np.ndarray
    geodesic_length: float


class Manifold:
    """Shared interface. Subclasses provide the closed forms."""

    kind: str = ""
    dim: int = 0
    point_shape: tuple = ()
    tangent_shape: tuple = ()
    injectivity_radius: float = np.inf
    #: curvature eigenvalue on directions orthogonal to a geodesic
    orthogonal_curvature: float = 0.0

    # -- bookkeeping -------------------------------------------------------
    @property
    def ambient_dim(self) -> int:
        return int(np.prod(self.point_shape))

    @property
    def name(self) -> str:
        return self.kind

    def __repr__(self):
        return self.name

    def __eq__(self, other):
        return type(self) is type(other) and self.dim == other.dim

    def __hash__(self):
        return hash((type(self).__name__, self.dim))

    def batch_shape(self, x) -> tuple:
        x = np.asarray(x)
        k = len(self.point_shape)
        if x.shape[x.ndim - k:] != self.point_shape:
            raise DimensionMismatch(
                f"{self.name}: expected point shape {self.point_shape}, got {x.shape}")
        return x.shape[:x.ndim - k]

    def _check_pair(self, x, v):
        bx = self.batch_shape(x)
        v = np.asarray(v)
        k = len(self.tangent_shape)
        if v.shape[v.ndim - k:] != self.tangent_shape:
            raise DimensionMismatch(
                f"{self.name}: expected tangent shape {self.tangent_shape}, got {v.shape}")
        return bx

    # -- metric --------------------------------------------------------------
    def inner(self, x, u, v):
        self._check_pair(x, u)
        self._check_pair(x, v)
        return _dot(np.asarray(u, float), np.asarray(v, float))

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def zero_vector(self, x):
        return np.zeros(self.batch_shape(x) + self.tangent_shape)

    def geodesic(self, x, y, t):
        v = self.log(x, y)
        return self.exp(x, _expand(t, len(self.tangent_shape)) * v)

    # -- derived Jacobi fields -----------------------------------------------
    def jacobi_field_reversed(self, x, y, t, eta):
        """Differential of ``g(t; x, .)`` at ``y`` applied to ``eta``."""
        return self.jacobi_field(y, x, 1.0 - np.asarray(t, float), eta)

    def adjoint_jacobi_field_reversed(self, x, y, t, nu):
        """Adjoint of :meth:`jacobi_field_reversed`; returns a vector at ``y``."""
        return self.adjoint_jacobi_field(y, x, 1.0 - np.asarray(t, float), nu)

    def adjoint_jacobi_pair(self, x, y, t, nu):
        """Both adjoint fields of ``g(t; x, y)`` at once, ``(at_x, at_y)``."""
        return (self.adjoint_jacobi_field(x, y, t, nu),
                self.adjoint_jacobi_field_reversed(x, y, t, nu))

    def curvature_frame(self, x, y) -> CurvatureFrame:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.batch_shape(x) != () or self.batch_shape(y) != ():
            raise DimensionMismatch("curvature_frame expects a single pair of points")
        v = self.log(x, y)
        d = float(self.norm(x, v))
        seeds = list(self._seed_basis(x))
        if d <= DEGENERATE_TOL:
            basis = _gram_schmidt(seeds, self.dim)
            kappa = np.zeros(self.dim)
        else:
            basis = _gram_schmidt([v / d] + seeds, self.dim)
            kappa = np.full(self.dim, self.orthogonal_curvature)
            kappa[0] = 0.0
        return CurvatureFrame(x, np.array(basis), kappa, d)

    def _seed_basis(self, x):
        return np.eye(self.tangent_shape[0])

    def tangent_basis(self, x):
        """Orthonormal basis of the tangent space at a single point ``x``,
        shape ``(dim, *tangent_shape)``."""
        return np.array(_gram_schmidt(list(self._seed_basis(x)), self.dim))

    # -- serialization -------------------------------------------------------
    def point_to_list(self, x):
        return np.asarray(x, float).reshape(-1).tolist()

    def point_from_list(self, values):
        x = np.asarray(values, dtype=float).reshape(self.point_shape)
        self.check_point(x)
        return x

    def tangent_to_json(self, x, v):
        return {"base": self.point_to_list(x),
                "vec": np.asarray(v, float).reshape(-1).tolist()}

    def tangent_from_json(self, obj):
        x = self.point_from_list(obj["base"])
        v = np.asarray(obj["vec"], dtype=float).reshape(self.tangent_shape)
        return x, v

    def check_point(self, x):
        self.batch_shape(x)

    def to_json(self):
        return self.name


def _gram_schmidt(candidates, count):
    basis = []
    for c in candidates:
        w = np.array(c, dtype=float)
        for b in basis:
            w = w - np.dot(w, b) * b
        nw = np.linalg.norm(w)
        if nw > 1e-8:
            basis.append(w / nw)
        if len(basis) == count:
            break
    return basis


class Euclidean(Manifold):
    kind = "Euclidean"

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)
        self.point_shape = (self.dim,)
        self.tangent_shape = (self.dim,)

    @property
    def name(self):
        return f"Euclidean({self.dim})"

    def exp(self, x, v):
        self._check_pair(x, v)
        return np.asarray(x, float) + np.asarray(v, float)

    def log(self, x, y):
        self.batch_shape(x)
        self.batch_shape(y)
        return np.asarray(y, float) - np.asarray(x, float)

    def dist(self, x, y):
        return np.linalg.norm(self.log(x, y), axis=-1)

    def geodesic(self, x, y, t):
        x = np.asarray(x, float)
        return x + _expand(t, 1) * self.log(x, y)

    def parallel_transport(self, x, y, v):
        self._check_pair(x, v)
        return np.array(v, dtype=float)

    def jacobi_field(self, x, y, t, eta):
        self._check_pair(x, eta)
        return _expand(1.0 - np.asarray(t, float), 1) * np.asarray(eta, float)

    def adjoint_jacobi_field(self, x, y, t, nu):
        return _expand(1.0 - np.asarray(t, float), 1) * np.asarray(nu, float)

    def random_point(self, rng, size=()):
        return rng.standard_normal(_size_tuple(size) + self.point_shape)

    def random_tangent(self, x, rng):
        return rng.standard_normal(np.shape(x))


class Sphere(Manifold):
    """Unit sphere S^m embedded in R^(m+1) with the induced metric."""

    kind = "Sphere"
    injectivity_radius = np.pi
    orthogonal_curvature = 1.0

    def __init__(self, dim: int = 2):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)
        self.point_shape = (self.dim + 1,)
        self.tangent_shape = (self.dim + 1,)

    @property
    def name(self):
        return f"Sphere({self.dim})"

    def check_point(self, x):
        self.batch_shape(x)
        if np.any(np.abs(np.linalg.norm(x, axis=-1) - 1.0) > 1e-12):
            raise GeometryError("sphere point does not have unit norm")

    def exp(self, x, v):
        self._check_pair(x, v)
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        y = np.cos(nv) * x + np.sinc(nv / np.pi) * v
        return y / np.linalg.norm(y, axis=-1, keepdims=True)

    def _log_and_dist(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        c = _dot(x, y)
        w = y - c[..., None] * x
        s = np.linalg.norm(w, axis=-1)
        d = np.arctan2(s, c)
        return w, s, d

    def log(self, x, y):
        self.batch_shape(x)
        self.batch_shape(y)
        w, s, d = self._log_and_dist(x, y)
        bad = d > np.pi - CUT_LOCUS_TOL
        if np.any(bad):
            raise CutLocusError("logarithm undefined for antipodal points",
                                _first_bad(bad))
        factor = np.where(s > 0, d / np.where(s > 0, s, 1.0), 1.0)
        return factor[..., None] * w

    def dist(self, x, y):
        self.batch_shape(x)
        self.batch_shape(y)
        chord = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)
        return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))

    def _direction(self, x, y):
        """Unit initial direction ``u`` of the geodesic and its length; ``u``
        is zero for degenerate geodesics."""
        v = self.log(x, y)
        d = np.linalg.norm(v, axis=-1)
        live = d > DEGENERATE_TOL
        u = np.where(live[..., None], v / np.where(live, d, 1.0)[..., None], 0.0)
        return u, np.where(live, d, 0.0), live

    @staticmethod
    def _coefficient(d, t, live):
        """``sin(d (1-t)) / sin(d)`` with its ``d -> 0`` limit ``1 - t``."""
        sd = np.sin(d)
        if np.any(live & (np.abs(sd) < CONJUGATE_TOL)):
            raise ConjugatePointError("geodesic endpoints are conjugate")
        safe = np.where(live, sd, 1.0)
        return np.where(live, np.sin(d * (1.0 - t)) / safe, 1.0 - t)

    def parallel_transport(self, x, y, v):
        self._check_pair(x, v)
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        u, d, _ = self._direction(x, y)
        a = _dot(v, u)[..., None]
        d = d[..., None]
        end_dir = -np.sin(d) * x + np.cos(d) * u
        return v - a * u + a * end_dir

    def jacobi_field(self, x, y, t, eta):
        """Differential of ``g(t; ., y)`` at ``x`` applied to ``eta``."""
        self._check_pair(x, eta)
        x = np.asarray(x, float)
        eta = np.asarray(eta, float)
        u, d, live = self._direction(x, y)
        t = np.broadcast_to(np.asarray(t, float), d.shape)
        a = _dot(eta, u)
        alpha = self._coefficient(d, t, live)
        td = (t * d)[..., None]
        moved_dir = -np.sin(td) * x + np.cos(td) * u
        ortho = eta - a[..., None] * u
        return ((1.0 - t) * a)[..., None] * moved_dir + alpha[..., None] * ortho

    def adjoint_jacobi_field(self, x, y, t, nu):
        """Adjoint of :meth:`jacobi_field`; ``nu`` lives at ``g(t; x, y)``."""
        x = np.asarray(x, float)
        u, d, live = self._direction(x, y)
        return self._adjoint(x, u, d, live, t, np.asarray(nu, float))

    def adjoint_jacobi_pair(self, x, y, t, nu):
        x = np.asarray(x, float)
        nu = np.asarray(nu, float)
        u, d, live = self._direction(x, y)
        # direction at y pointing back to x
        u_back = np.sin(d)[..., None] * x - np.cos(d)[..., None] * u
        return (self._adjoint(x, u, d, live, t, nu),
                self._adjoint(np.asarray(y, float), u_back, d, live,
                              1.0 - np.asarray(t, float), nu))

    def _adjoint(self, x, u, d, live, t, nu):
        t = np.broadcast_to(np.asarray(t, float), d.shape)
        alpha = self._coefficient(d, t, live)
        td = (t * d)[..., None]
        moved_dir = -np.sin(td) * x + np.cos(td) * u
        moved_pt = np.cos(td) * x + np.sin(td) * u
        b = _dot(nu, moved_dir)
        ortho = nu - b[..., None] * moved_dir - _dot(nu, moved_pt)[..., None] * moved_pt
        return ((1.0 - t) * b)[..., None] * u + alpha[..., None] * ortho

    def _seed_basis(self, x):
        x = np.asarray(x, float)
        e = np.eye(self.dim + 1)
        return e - np.outer(e @ x, x)

    def random_point(self, rng, size=()):
        p = rng.standard_normal(_size_tuple(size) + self.point_shape)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def random_tangent(self, x, rng):
        x = np.asarray(x, float)
        v = rng.standard_normal(x.shape)
        return v - _dot(v, x)[..., None] * x


def hat(w):
    """Skew-symmetric matrix of an axis vector (batched)."""
    w = np.asarray(w, float)
    z = np.zeros(w.shape[:-1])
    return np.stack([
        np.stack([z, -w[..., 2], w[..., 1]], axis=-1),
        np.stack([w[..., 2], z, -w[..., 0]], axis=-1),
        np.stack([-w[..., 1], w[..., 0], z], axis=-1),
    ], axis=-2)


def vee(a):
    a = np.asarray(a, float)
    return np.stack([a[..., 2, 1], a[..., 0, 2], a[..., 1, 0]], axis=-1)


def rotation_from_axis(w):
    """Rodrigues formula: ``expm(hat(w))``."""
    w = np.asarray(w, float)
    theta = np.linalg.norm(w, axis=-1)[..., None, None]
    k = hat(w)
    small = theta < 1e-4
    th = np.where(small, 1.0, theta)
    s = np.where(small, 1.0 - theta**2 / 6.0 + theta**4 / 120.0, np.sin(th) / th)
    c = np.where(small, 0.5 - theta**2 / 24.0 + theta**4 / 720.0,
                 (1.0 - np.cos(th)) / th**2)
    return np.eye(3) + s * k + c * (k @ k)


def rotate_about(v, u, angle):
    """Rotate vectors ``v`` by ``angle`` about unit axes ``u`` (batched)."""
    c = np.cos(angle)[..., None]
    s = np.sin(angle)[..., None]
    return c * v + s * np.cross(u, v) + (1.0 - c) * _dot(u, v)[..., None] * u


def axis_from_rotation(r):
    """Principal matrix logarithm of rotations as axis vectors, with the
    rotation angle. Angles are in ``[0, pi]``."""
    r = np.asarray(r, float)
    a = 0.5 * vee(r - np.swapaxes(r, -1, -2))
    sin_part = np.linalg.norm(a, axis=-1)
    cos_part = 0.5 * (np.trace(r, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(sin_part, cos_part)
    small = theta < 1e-6
    factor = np.where(small, 1.0 + theta**2 / 6.0,
                      theta / np.where(small, 1.0, np.sin(theta)))
    w = factor[..., None] * a
    near_pi = theta > 2.5
    if np.any(near_pi):
        # sin(theta) is small here; read the axis off the symmetric part.
        sym = 0.5 * (r + np.swapaxes(r, -1, -2)) - cos_part[..., None, None] * np.eye(3)
        diag = np.diagonal(sym, axis1=-2, axis2=-1)
        k = np.argmax(diag, axis=-1)
        col = np.take_along_axis(sym, k[..., None, None], axis=-1)[..., 0]
        axis = col / np.linalg.norm(col, axis=-1, keepdims=True)
        sign = np.where(_dot(axis, a) < 0, -1.0, 1.0)
        w = np.where(near_pi[..., None], (sign * theta)[..., None] * axis, w)
    return w, theta


class Rotations(Manifold):
    """SO(3) with the bi-invariant metric ``tr(U^T V) / 2``."""

    kind = "Rotations3"
    injectivity_radius = np.pi
    orthogonal_curvature = 0.25

    def __init__(self):
        self.dim = 3
        self.point_shape = (3, 3)
        self.tangent_shape = (3,)

    def check_point(self, x):
        self.batch_shape(x)
        x = np.asarray(x, float)
        gram = np.swapaxes(x, -1, -2) @ x
        if np.any(np.linalg.norm(gram - np.eye(3), axis=(-2, -1)) > 1e-10):
            raise GeometryError("rotation matrix is not orthogonal")
        if np.any(np.linalg.det(x) <= 0):
            raise GeometryError("rotation matrix has non-positive determinant")

    def exp(self, x, v):
        self._check_pair(x, v)
        return np.asarray(x, float) @ rotation_from_axis(v)

    def log(self, x, y):
        self.batch_shape(x)
        self.batch_shape(y)
        rel = np.swapaxes(np.asarray(x, float), -1, -2) @ np.asarray(y, float)
        w, theta = axis_from_rotation(rel)
        bad = theta > np.pi - CUT_LOCUS_TOL
        if np.any(bad):
            raise CutLocusError("logarithm undefined at rotation angle pi",
                                _first_bad(bad))
        return w

    def dist(self, x, y):
        self.batch_shape(x)
        self.batch_shape(y)
        rel = np.swapaxes(np.asarray(x, float), -1, -2) @ np.asarray(y, float)
        return axis_from_rotation(rel)[1]

    def _direction(self, x, y):
        v = self.log(x, y)
        d = np.linalg.norm(v, axis=-1)
        live = d > DEGENERATE_TOL
        u = np.where(live[..., None], v / np.where(live, d, 1.0)[..., None], 0.0)
        return u, np.where(live, d, 0.0), live

    @staticmethod
    def _coefficient(d, t, live):
        """``sin(d (1-t) / 2) / sin(d / 2)`` with limit ``1 - t``."""
        sd = np.sin(0.5 * d)
        if np.any(live & (np.abs(sd) < CONJUGATE_TOL)):
            raise ConjugatePointError("geodesic endpoints are conjugate")
        safe = np.where(live, sd, 1.0)
        return np.where(live, np.sin(0.5 * d * (1.0 - t)) / safe, 1.0 - t)

    # In left-trivialized coordinates, transport along x exp(s hat(w)) by
    # parameter s acts as a rotation of the axis vector by -s |w| / 2 about w.
    def parallel_transport(self, x, y, v):
        self._check_pair(x, v)
        u, d, _ = self._direction(x, y)
        return rotate_about(np.asarray(v, float), u, -0.5 * d)

    def jacobi_field(self, x, y, t, eta):
        self._check_pair(x, eta)
        eta = np.asarray(eta, float)
        u, d, live = self._direction(x, y)
        t = np.broadcast_to(np.asarray(t, float), d.shape)
        alpha = self._coefficient(d, t, live)
        a = _dot(eta, u)
        ortho = eta - a[..., None] * u
        moved = rotate_about(ortho, u, -0.5 * t * d)
        return ((1.0 - t) * a)[..., None] * u + alpha[..., None] * moved

    def adjoint_jacobi_field(self, x, y, t, nu):
        u, d, live = self._direction(x, y)
        return self._adjoint(u, d, live, t, np.asarray(nu, float))

    def adjoint_jacobi_pair(self, x, y, t, nu):
        nu = np.asarray(nu, float)
        u, d, live = self._direction(x, y)
        # log_y x = -log_x y in left-trivialized coordinates
        return (self._adjoint(u, d, live, t, nu),
                self._adjoint(-u, d, live, 1.0 - np.asarray(t, float), nu))

    def _adjoint(self, u, d, live, t, nu):
        t = np.broadcast_to(np.asarray(t, float), d.shape)
        alpha = self._coefficient(d, t, live)
        b = _dot(nu, u)
        ortho = nu - b[..., None] * u
        back = rotate_about(ortho, u, 0.5 * t * d)
        return ((1.0 - t) * b)[..., None] * u + alpha[..., None] * back

    def point_to_list(self, x):
        return np.asarray(x, float).reshape(9).tolist()

    def random_point(self, rng, size=()):
        shape = _size_tuple(size)
        w = rng.standard_normal(shape + (3,))
        w *= (rng.uniform(0, 0.9 * np.pi, shape) / np.linalg.norm(w, axis=-1))[..., None]
        return rotation_from_axis(w)

    def random_tangent(self, x, rng):
        return rng.standard_normal(np.shape(x)[:-2] + (3,))


def manifold_from_name(name) -> Manifold:
    """Parse ``Euclidean(m)``, ``Sphere(m)`` or ``Rotations3`` (alias ``SO3``)."""
    if isinstance(name, Manifold):
        return name
    if isinstance(name, dict):
        kind = str(name.get("kind", "")).lower()
        dim = name.get("dim")
        name = f"{kind}({dim})" if dim is not None else kind
    text = str(name).strip().lower().replace(" ", "")
    if text in ("rotations3", "rotations", "so3", "so(3)"):
        return Rotations()
    for prefix, cls in (("euclidean", Euclidean), ("sphere", Sphere)):
        if text.startswith(prefix):
            rest = text[len(prefix):].strip("()")
            if not rest.isdigit():
                raise ValueError(f"manifold: missing dimension in {name!r}")
            return cls(int(rest))
    raise ValueError(f"manifold: unknown manifold {name!r}")
