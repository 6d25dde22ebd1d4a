"""Shared random instances and finite-difference oracles for the tests."""
import numpy as np

from bezierfit.manifolds import Euclidean, Rotations, Sphere

MANIFOLDS = [Euclidean(3), Sphere(2), Rotations()]
MANIFOLD_IDS = [M.name for M in MANIFOLDS]


def random_pair(M, rng, max_dist=2.5):
    """Two points at distance below ``max_dist`` (away from cut and conjugate loci)."""
    x = M.random_point(rng)
    v = M.random_tangent(x, rng)
    v *= rng.uniform(0.05, max_dist) / np.linalg.norm(v)
    return x, M.exp(x, v)


def ambient_tangent(M, base, dpoint):
    """Tangent vector representation of an ambient velocity ``dpoint`` at ``base``."""
    if M.kind == "Rotations3":
        a = base.T @ dpoint
        return np.array([a[2, 1], a[0, 2], a[1, 0]])
    return dpoint


def fd_tangent(M, curve, h=1e-6):
    """Central difference velocity of ``curve(eps)`` at ``eps = 0``."""
    return ambient_tangent(M, curve(0.0), (curve(h) - curve(-h)) / (2 * h))

