"""Composite Bézier curves on manifolds.

A composite curve of ``n`` segments of degree ``K`` is held as one array of
shape ``(n, K + 1, *point_shape)``; ``controls[i, K]`` and ``controls[i + 1, 0]``
are the same junction point ``p_(i+1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .manifolds import Manifold, manifold_from_name

FITTING = "fitting"
INTERPOLATION = "interpolation"
MIN_DEGREE, MAX_DEGREE = 2, 6


def bernstein_eval_euclidean(controls, t):
    """Evaluate a Euclidean Bézier curve in Bernstein form."""
    b = np.asarray(controls, dtype=float)
    k = len(b) - 1
    t = np.asarray(t, dtype=float)
    weights = np.stack([comb(k, j) * t**j * (1.0 - t) ** (k - j) for j in range(k + 1)])
    return np.tensordot(weights, b, axes=(0, 0))


def _level_times(t, M, count):
    """Broadcast times ``(T,)`` to ``(count, T)`` for a tree level."""
    return np.broadcast_to(t, (count,) + t.shape)


def decasteljau_tree(M: Manifold, controls, t):
    """All intermediate points of the De Casteljau recursion.

    Returns a list whose entry ``k`` has shape ``(K + 1 - k, T, *point_shape)``
    for times of shape ``(T,)``. ``controls`` is either ``(K + 1, *point_shape)``
    or already per sample, ``(K + 1, T, *point_shape)``.
    """
    controls = np.asarray(controls, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    K = controls.shape[0] - 1
    if controls.ndim == 1 + len(M.point_shape):
        level = np.broadcast_to(controls[:, None], (K + 1, t.size) + M.point_shape)
    else:
        level = controls  # one set of controls per sample, (K + 1, T, *point_shape)
    tree = [level]
    for k in range(1, K + 1):
        level = M.geodesic(level[:-1], level[1:], _level_times(t, M, K + 1 - k))
        tree.append(level)
    return tree


def decasteljau(M: Manifold, controls, t):
    """Point of a single Bézier segment at ``t`` (scalar or 1-d array)."""
    scalar = np.ndim(t) == 0
    out = decasteljau_tree(M, controls, t)[-1][0]
    return out[0] if scalar else out


def segment_diff(M: Manifold, controls, t, j, eta):
    """Differential of the segment at scalar ``t`` with respect to control
    point ``j`` applied to ``eta`` (forward Jacobi recursion)."""
    controls = np.asarray(controls, dtype=float)
    K = controls.shape[0] - 1
    if not 0 <= j <= K:
        raise IndexError(f"control index {j} outside 0..{K}")
    tree = decasteljau_tree(M, controls, t)
    tree = [lvl[:, 0] for lvl in tree]
    zero = np.zeros(M.tangent_shape)
    etas = [np.array(eta, dtype=float) if i == j else zero for i in range(K + 1)]
    for k in range(1, K + 1):
        prev, nxt = tree[k - 1], []
        for i in range(K + 1 - k):
            # only nodes whose support i..i+k contains j carry a variation
            if not i <= j <= i + k:
                nxt.append(zero)
                continue
            acc = zero
            if j < i + k:
                acc = acc + M.jacobi_field(prev[i], prev[i + 1], t, etas[i])
            if j > i:
                acc = acc + M.jacobi_field_reversed(prev[i], prev[i + 1], t, etas[i + 1])
            nxt.append(acc)
        etas = nxt
    return etas[0]


def segment_backprop(M: Manifold, tree, t, cotangent):
    """Push cotangents at the curve points back to every control point.

    ``tree`` is the output of :func:`decasteljau_tree` for times ``t`` of
    shape ``(T,)``; ``cotangent`` has shape ``(T, *tangent_shape)``. Returns
    shape ``(K + 1, T, *tangent_shape)``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    K = len(tree) - 1
    cot = np.asarray(cotangent, dtype=float)[None]
    for k in range(K, 0, -1):
        start, end = tree[k - 1][:-1], tree[k - 1][1:]
        times = _level_times(t, M, K + 1 - k)
        to_start, to_end = M.adjoint_jacobi_pair(start, end, times, cot)
        cot = np.zeros((K + 2 - k,) + to_start.shape[1:])
        cot[:-1] += to_start
        cot[1:] += to_end
    return cot


def segment_adjoint_diff(M: Manifold, controls, t, j, nu):
    """Adjoint of :func:`segment_diff`; returns a tangent vector at ``b_j``."""
    tree = decasteljau_tree(M, controls, t)
    nu = np.asarray(nu, dtype=float)[None]
    return segment_backprop(M, tree, t, nu)[j, 0]


@dataclass
class CompositeBezier:
    manifold: Manifold
    controls: np.ndarray

    def __post_init__(self):
        self.manifold = manifold_from_name(self.manifold)
        self.controls = np.asarray(self.controls, dtype=float)
        pshape = self.manifold.point_shape
        if self.controls.ndim != 2 + len(pshape) or self.controls.shape[2:] != pshape:
            raise ValueError(
                f"controls must have shape (n, K+1, {pshape}), got {self.controls.shape}")
        if self.degree < 1:
            raise ValueError("degree must be at least 1")
        for i in range(1, self.n):
            gap = float(self.manifold.dist(self.controls[i - 1, -1], self.controls[i, 0]))
            if gap > 1e-12:
                raise ValueError(f"segments {i - 1} and {i} do not share their junction")

    @property
    def n(self) -> int:
        return self.controls.shape[0]

    @property
    def degree(self) -> int:
        return self.controls.shape[1] - 1

    @property
    def junctions(self):
        return np.concatenate([self.controls[:, 0], self.controls[-1:, -1]])

    @classmethod
    def from_segments(cls, manifold, segments):
        """Build from a list of per-segment control lists (equal degrees)."""
        degrees = {len(s) for s in segments}
        if len(degrees) != 1:
            raise ValueError("all segments must have the same degree")
        return cls(manifold, np.asarray(segments, dtype=float))

    def segments(self):
        return [self.controls[i] for i in range(self.n)]

    def to_json(self):
        M = self.manifold
        return {
            "manifold": M.to_json(),
            "degree": self.degree,
            "n": self.n,
            "segments": [[M.point_to_list(b) for b in seg] for seg in self.controls],
        }

    @classmethod
    def from_json(cls, obj):
        M = manifold_from_name(obj["manifold"])
        segs = [[np.asarray(p, float).reshape(M.point_shape) for p in seg]
                for seg in obj["segments"]]
        curve = cls.from_segments(M, segs)
        if "degree" in obj and int(obj["degree"]) != curve.degree:
            raise ValueError("degree: does not match the segment lengths")
        if "n" in obj and int(obj["n"]) != curve.n:
            raise ValueError("n: does not match the number of segments")
        return curve


def segment_index(t, n):
    """Segment owning parameter ``t``: ``t = i`` belongs to segment ``i - 1``."""
    t = np.asarray(t, dtype=float)
    return np.clip(np.ceil(t).astype(int) - 1, 0, n - 1)


def _check_domain(t, n):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > n):
        raise ValueError(f"curve parameter outside [0, {n}]")


def composite_eval(B: CompositeBezier, t):
    """Evaluate the composite curve at ``t`` in ``[0, n]`` (scalar or array)."""
    _check_domain(t, B.n)
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    tree, _, _ = _composite_tree(B, ts)
    out = tree[-1][0]
    return out[0] if scalar else out


def _composite_tree(B: CompositeBezier, ts):
    """De Casteljau tree over all samples at once, with segment indices and
    local times."""
    seg = segment_index(ts, B.n)
    local = ts - seg
    per_sample = np.moveaxis(B.controls[seg], 1, 0)
    return decasteljau_tree(B.manifold, per_sample, local), seg, local


def enforce_c1(B: CompositeBezier) -> CompositeBezier:
    """Replace each ``b_i^+`` by the reflection ``g(2; b_i^-, p_i)``."""
    M = B.manifold
    c = B.controls.copy()
    if B.degree < 2:
        raise ValueError("C1 enforcement needs degree >= 2")
    for i in range(1, B.n):
        c[i, 1] = M.geodesic(c[i - 1, -2], c[i, 0], 2.0)
    return CompositeBezier(M, c)


def c1_defect(B: CompositeBezier):
    """Largest distance between a junction and the midpoint of its neighbours."""
    M = B.manifold
    if B.n < 2:
        return 0.0
    mids = M.geodesic(B.controls[:-1, -2], B.controls[1:, 1], 0.5)
    return float(np.max(M.dist(mids, B.controls[1:, 0])))


# -- free-variable packing -------------------------------------------------

def free_slots(n, K, mode):
    """(segment, control index) of every free variable in pack order.

    Junction ``p_i`` (``i >= 1``) is addressed through segment ``i - 1``.
    """
    if mode == FITTING:
        slots = [(0, j) for j in range(K + 1)]
        for i in range(1, n):
            slots += [(i, j) for j in range(2, K + 1)]
    elif mode == INTERPOLATION:
        slots = [(0, j) for j in range(1, K)]
        for i in range(1, n):
            slots += [(i, j) for j in range(2, K)]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return slots


def pack_size(n, K, mode):
    return n * (K - 1) + 2 if mode == FITTING else n * (K - 2) + 1


@dataclass
class VariablePack:
    manifold: Manifold
    mode: str
    n: int
    K: int
    points: np.ndarray
    fixed_junctions: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.manifold = manifold_from_name(self.manifold)
        self.points = np.asarray(self.points, dtype=float)
        if not MIN_DEGREE <= self.K <= MAX_DEGREE:
            raise ValueError(f"degree must be in {MIN_DEGREE}..{MAX_DEGREE}")
        if self.n < 1:
            raise ValueError("need at least one segment")
        expected = pack_size(self.n, self.K, self.mode)
        if self.points.shape != (expected,) + self.manifold.point_shape:
            raise ValueError(
                f"{self.mode} pack for n={self.n}, K={self.K} needs {expected} points, "
                f"got array of shape {self.points.shape}")
        if self.mode == INTERPOLATION:
            if self.fixed_junctions is None:
                raise ValueError("interpolation pack requires fixed_junctions")
            self.fixed_junctions = np.asarray(self.fixed_junctions, dtype=float)
            if self.fixed_junctions.shape != (self.n + 1,) + self.manifold.point_shape:
                raise ValueError("fixed_junctions must hold n + 1 points")

    def with_points(self, points):
        return VariablePack(self.manifold, self.mode, self.n, self.K, points,
                            self.fixed_junctions)

    def to_json(self):
        M = self.manifold
        out = {"manifold": M.to_json(), "mode": self.mode, "n": self.n, "degree": self.K,
               "points": [M.point_to_list(p) for p in self.points]}
        if self.fixed_junctions is not None:
            out["fixed_junctions"] = [M.point_to_list(p) for p in self.fixed_junctions]
        return out

    @classmethod
    def from_json(cls, obj):
        M = manifold_from_name(obj["manifold"])
        pts = np.array([np.reshape(p, M.point_shape) for p in obj["points"]], dtype=float)
        fixed = obj.get("fixed_junctions")
        if fixed is not None:
            fixed = np.array([np.reshape(p, M.point_shape) for p in fixed], dtype=float)
        return cls(M, obj["mode"], int(obj["n"]), int(obj["degree"]), pts, fixed)


def pack(B: CompositeBezier, mode=FITTING) -> VariablePack:
    slots = free_slots(B.n, B.degree, mode)
    points = np.array([B.controls[i, j] for i, j in slots])
    fixed = B.junctions if mode == INTERPOLATION else None
    return VariablePack(B.manifold, mode, B.n, B.degree, points, fixed)


def unpack(v: VariablePack) -> CompositeBezier:
    """Rebuild the C1 composite curve described by a pack."""
    M, n, K = v.manifold, v.n, v.K
    c = np.empty((n, K + 1) + M.point_shape)
    filled = np.zeros((n, K + 1), dtype=bool)
    for (i, j), p in zip(free_slots(n, K, v.mode), v.points):
        c[i, j] = p
        filled[i, j] = True
    if v.mode == INTERPOLATION:
        c[:, 0] = v.fixed_junctions[:-1]
        c[:, K] = v.fixed_junctions[1:]
    for i in range(1, n):
        c[i, 0] = c[i - 1, K]
        c[i, 1] = M.geodesic(c[i - 1, K - 1], c[i, 0], 2.0)
    return CompositeBezier(M, c)


def composite_backprop(B: CompositeBezier, t, cotangent):
    """Cotangents at curve points ``B(t)`` pushed back to every control point,
    before the C1 substitution. Returns shape ``(n, K + 1, *tangent_shape)``
    where junction contributions are split between both adjacent segments."""
    M = B.manifold
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    cot = np.asarray(cotangent, dtype=float).reshape(ts.shape + M.tangent_shape)
    tree, seg, local = _composite_tree(B, ts)
    per_sample = np.moveaxis(segment_backprop(M, tree, local, cot), 1, 0)
    out = np.zeros((B.n, B.degree + 1) + M.tangent_shape)
    np.add.at(out, seg, per_sample)
    return out


def c1_chain(B: CompositeBezier, grads):
    """Apply the adjoint of ``b_i^+ = g(2; b_i^-, p_i)`` to per-control
    cotangents (in place on a copy); afterwards ``grads[i, 1]`` for
    ``i >= 1`` is zero and junction totals sit in ``grads[i - 1, K]``."""
    M = B.manifold
    K = B.degree
    g = np.array(grads, dtype=float)
    c = B.controls
    for i in range(B.n - 1, 0, -1):
        cot = g[i, 1].copy()
        g[i, 1] = 0.0
        g[i - 1, K - 1] += M.adjoint_jacobi_field(c[i - 1, K - 1], c[i, 0], 2.0, cot)
        g[i, 0] += M.adjoint_jacobi_field_reversed(c[i - 1, K - 1], c[i, 0], 2.0, cot)
    for i in range(1, B.n):
        g[i - 1, K] += g[i, 0]
        g[i, 0] = 0.0
    return g


def gather_free(grads, n, K, mode):
    """Collect per-control cotangents (after :func:`c1_chain`) in pack order."""
    return np.array([grads[i, j] for i, j in free_slots(n, K, mode)])


def _canonical(i, j, K):
    return (i - 1, K) if i >= 1 and j == 0 else (i, j)


def influencing_slots(n, K, s):
    """Control slots (canonical addressing) that the points of segment ``s``
    depend on once the C1 substitution is applied."""
    seen = set()
    stack = [_canonical(s, j, K) for j in range(K + 1)]
    while stack:
        i, j = stack.pop()
        if (i, j) in seen:
            continue
        seen.add((i, j))
        if i >= 1 and j == 1:
            stack += [_canonical(i - 1, K - 1, K), (i - 1, K)]
    return seen


def composite_adjoint_diff(v: VariablePack, t, nu):
    """Adjoint differential of ``t -> B(t)`` with respect to the free
    variables of ``v``; returns ``{pack index: tangent vector}`` for the
    variables that influence ``B(t)``."""
    B = unpack(v)
    g = c1_chain(B, composite_backprop(B, t, nu))
    active = influencing_slots(v.n, v.K, int(segment_index(t, v.n)))
    return {idx: g[i, j]
            for idx, (i, j) in enumerate(free_slots(v.n, v.K, v.mode))
            if (i, j) in active}
