"""Hyperboloid model of hyperbolic n-space.

Points are float64 arrays of shape ``(..., n + 1)`` on the upper sheet
``<x, x> = -1``, ``x[0] > 0`` of Minkowski space with the form
``<x, y> = -x0 y0 + sum_i xi yi``.  Tangent vectors at ``x`` are arrays
Minkowski-orthogonal to ``x``.  Isometries are ``(n + 1, n + 1)`` matrices in
the orthochronous Lorentz group acting linearly on coordinates.

Every function is pure and vectorised over leading axes where it makes sense.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

#: Beyond this distance from the origin cosh loses too many digits.
MAX_TRUSTED_RADIUS = 25.0

POINT_TOL = 1e-12
TANGENT_TOL = 1e-12
ISOMETRY_TOL = 1e-10
CLAMP_REPORT = 1e-9
NEAR_SWITCH = 1.0


class DomainError(ValueError):
    """Input violates a hyperboloid-model invariant."""


class _ClampCounter:
    """Counts distance evaluations whose cosh argument fell noticeably below 1."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


clamp_counter = _ClampCounter()


def minkowski(x, y):
    """Minkowski product along the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def minkowski_gram(X, Y):
    """Matrix of Minkowski products ``<X[i], Y[j]>`` for point arrays."""
    Xs = np.array(X, dtype=float, copy=True)
    Xs[..., 0] *= -1.0
    return Xs @ np.asarray(Y, dtype=float).T


def origin(n):
    """The point ``(1, 0, ..., 0)`` of H^n."""
    o = np.zeros(n + 1)
    o[0] = 1.0
    return o


def project(x):
    """Rescale a future-timelike vector back onto the hyperboloid."""
    x = np.asarray(x, dtype=float)
    q = -minkowski(x, x)
    if np.any(q <= 0) or np.any(x[..., 0] <= 0):
        raise DomainError("vector is not future-timelike; cannot project onto H^n")
    return x / np.sqrt(q)[..., None]


def lift(x):
    """Recompute ``x0`` from the spatial coordinates.

    Unlike :func:`project` this needs no cancellation in the Minkowski
    self-product, so it stays accurate for far points.
    """
    x = np.array(x, dtype=float)
    x[..., 0] = np.sqrt(1.0 + np.sum(x[..., 1:] ** 2, axis=-1))
    return x


def _scale(x):
    # absolute coordinate error grows like x0**2 in the self-product
    return 1.0 + np.asarray(x, dtype=float)[..., 0] ** 2


def check_point(x, tol=POINT_TOL):
    """Validate that ``x`` lies on the upper sheet; returns it as an array.

    The self-product tolerance is relative to ``x0**2`` since coordinates of
    far points carry proportionally larger rounding error.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 3:
        raise DomainError("hyperboloid points need at least 3 coordinates")
    if np.any(x[..., 0] <= 0):
        raise DomainError("point is not on the upper sheet (x0 <= 0)")
    err = np.abs(minkowski(x, x) + 1.0)
    if np.any(err > tol * _scale(x)):
        raise DomainError(f"<x,x> != -1 (max deviation {np.max(err):.3g})")
    return x


def check_tangent(x, v, tol=TANGENT_TOL):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    err = np.abs(minkowski(x, v))
    if np.any(err > tol * _scale(x) * (1.0 + np.linalg.norm(v, axis=-1))):
        raise DomainError(f"vector is not tangent at base point (<x,v>={np.max(err):.3g})")
    return v


def lorentz_form(n):
    J = np.eye(n + 1)
    J[0, 0] = -1.0
    return J


def check_isometry(M, tol=ISOMETRY_TOL):
    """Validate ``M^T J M = J`` and that the upper sheet is preserved."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError("isometry must be a square matrix")
    J = lorentz_form(M.shape[0] - 1)
    err = np.max(np.abs(M.T @ J @ M - J))
    if err > tol * max(1.0, M[0, 0] ** 2):
        raise DomainError(f"matrix does not preserve the Minkowski form (error {err:.3g})")
    if M[0, 0] <= 0:
        raise DomainError("matrix swaps the sheets of the hyperboloid")
    return M


def dist(x, y):
    """Hyperbolic distance, ``arccosh(-<x, y>)`` with the argument clamped to 1.

    Nearby pairs use the equivalent ``2 asinh(|x - y|_M / 2)``, which keeps
    full precision where arccosh is ill-conditioned; pairs further apart
    than ``NEAR_SWITCH`` use arccosh, which avoids the cancellation in
    ``|x - y|_M`` for large separations.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    q = minkowski(d, d)
    bad = q < 0
    if np.any(bad):
        if np.any(q < -CLAMP_REPORT * _scale(x)):
            clamp_counter.count += int(np.count_nonzero(q < -CLAMP_REPORT * _scale(x)))
        q = np.where(bad, 0.0, q)
    far = np.max(np.abs(x[..., 0])) if x.size else 0.0
    if far > math.cosh(MAX_TRUSTED_RADIUS):
        warnings.warn("distance evaluated beyond the trusted radius", RuntimeWarning)
    near = 2.0 * np.arcsinh(0.5 * np.sqrt(q))
    if np.all(near <= NEAR_SWITCH):
        return near
    return np.where(near <= NEAR_SWITCH, near, np.arccosh(np.maximum(-minkowski(x, y), 1.0)))


def pairwise_dist(X, Y):
    """Distance matrix between two stacks of points."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    D = np.arccosh(np.maximum(-minkowski_gram(X, Y), 1.0))
    i, j = np.nonzero(D <= NEAR_SWITCH)
    if len(i):
        D[i, j] = dist(X[i], Y[j])
    return D


def tangent_norm(v):
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.maximum(minkowski(v, v), 0.0))


def to_tangent(x, v):
    """Minkowski-orthogonal projection of ``v`` onto the tangent space at ``x``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return v + minkowski(x, v)[..., None] * x


def exp_map(x, v):
    """Exponential map at ``x``; ``exp_x(t u)`` is a unit-speed geodesic for unit ``u``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    r = tangent_norm(v)[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        sinhc = np.where(r > 1e-12, np.sinh(r) / np.where(r > 0, r, 1.0), 1.0 + r**2 / 6.0)
    return lift(np.cosh(r) * x + sinhc * v)


def log_map(x, y):
    """Inverse of :func:`exp_map`; returns the zero vector when ``x == y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = dist(x, y)[..., None]
    u = y + minkowski(x, y)[..., None] * x
    nu = tangent_norm(u)[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(nu > 0, u * (d / np.where(nu > 0, nu, 1.0)), 0.0)
    return out


def dist_gradient(w, x):
    """Unit gradient at ``x`` of ``dist(w, .)``."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    d = dist(w, x)
    if np.any(d <= 1e-14):
        raise DomainError("gradient singularity: x coincides with w")
    return -log_map(x, w) / d[..., None]


def geodesic(x, u, t):
    """Points ``exp_x(t u)`` for a unit tangent ``u`` and times ``t`` (array)."""
    t = np.asarray(t, dtype=float)[..., None]
    return lift(np.cosh(t) * x + np.sinh(t) * u)


def geodesic_velocity(x, u, t):
    t = np.asarray(t, dtype=float)[..., None]
    return np.sinh(t) * x + np.cosh(t) * u


def parallel_transport(x, y, v):
    """Parallel transport of ``v`` in ``T_x`` to ``T_y`` along the geodesic."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    c = minkowski(y, v) / (1.0 - minkowski(x, y))
    return v + c[..., None] * (x + y)


def boost(x):
    """The pure boost carrying the origin to ``x``; its columns 1..n span ``T_x``."""
    x = check_point(x)
    n = x.shape[0] - 1
    xs = x[1:]
    B = np.empty((n + 1, n + 1))
    B[0, 0] = x[0]
    B[0, 1:] = xs
    B[1:, 0] = xs
    B[1:, 1:] = np.eye(n) + np.outer(xs, xs) / (1.0 + x[0])
    return B


def tangent_basis(x):
    """Orthonormal basis of ``T_x``, as rows of an ``(n, n + 1)`` array."""
    return boost(x)[:, 1:].T.copy()


def tangent_coords(x, v):
    """Coordinates of tangent vectors ``v`` (stack allowed) in :func:`tangent_basis`."""
    E = tangent_basis(x)
    v = np.array(v, dtype=float, copy=True)
    v[..., 0] *= -1.0
    return v @ E.T


def apply(g, x):
    """Action of an isometry matrix on points, re-lifted onto the sheet."""
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    return lift(np.einsum("...ij,...j->...i", g, x))


def apply_tangent(g, v):
    return np.einsum("...ij,...j->...i", np.asarray(g, dtype=float), np.asarray(v, dtype=float))


def inverse(g):
    """Inverse of a Lorentz matrix, ``J g^T J``."""
    g = np.asarray(g, dtype=float)
    J = lorentz_form(g.shape[0] - 1)
    return J @ g.T @ J


def rotation(n, angle, i=1, j=2):
    """Rotation fixing the origin in the ``(i, j)`` coordinate plane."""
    R = np.eye(n + 1)
    c, s = math.cos(angle), math.sin(angle)
    R[i, i] = c
    R[i, j] = -s
    R[j, i] = s
    R[j, j] = c
    return R


def translation(n, length, axis=1):
    """Hyperbolic translation of given length along the ``axis`` coordinate line."""
    T = np.eye(n + 1)
    c, s = math.cosh(length), math.sinh(length)
    T[0, 0] = c
    T[0, axis] = s
    T[axis, 0] = s
    T[axis, axis] = c
    return T


def to_ball(x):
    """Poincare ball coordinates."""
    x = np.asarray(x, dtype=float)
    return x[..., 1:] / (1.0 + x[..., :1])


def from_ball(b):
    b = np.asarray(b, dtype=float)
    r2 = np.sum(b * b, axis=-1, keepdims=True)
    return np.concatenate([(1.0 + r2), 2.0 * b], axis=-1) / (1.0 - r2)


def ball_tangent(x, v):
    """Differential of :func:`to_ball` applied to tangent vectors ``v`` at ``x``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    d = 1.0 + x[..., :1]
    return v[..., 1:] / d - x[..., 1:] * v[..., :1] / d**2


def polar_point(n, r, direction):
    """Point at distance ``r`` from the origin in the given unit Euclidean direction."""
    direction = np.asarray(direction, dtype=float)
    r = np.asarray(r, dtype=float)[..., None]
    return np.concatenate([np.cosh(r), np.sinh(r) * direction], axis=-1)


def random_directions(rng, n, size):
    """Uniform unit vectors in R^n."""
    v = rng.standard_normal((size, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def ball_volume(n, r):
    """Volume of a hyperbolic ball of radius ``r`` in H^n (n = 2 or 3 closed forms)."""
    if n == 2:
        return 2.0 * math.pi * (math.cosh(r) - 1.0)
    if n == 3:
        return math.pi * (math.sinh(2.0 * r) - 2.0 * r)
    from scipy.integrate import quad
    area = 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)
    return area * quad(lambda s: math.sinh(s) ** (n - 1), 0.0, r)[0]


def sample_ball_radii(rng, n, rmax, size):
    """Radii distributed like hyperbolic volume inside a ball of radius ``rmax``."""
    u = rng.random(size)
    if n == 2:
        return np.arccosh(1.0 + u * (math.cosh(rmax) - 1.0))
    # inverse CDF by tabulation
    grid = np.linspace(0.0, rmax, 4097)
    dens = np.sinh(grid) ** (n - 1)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(u, cdf, grid)


# --- converters from 2x2 matrix groups -----------------------------------

def _hermitian_basis():
    # X = [[x0 + x3, x1 - i x2], [x1 + i x2, x0 - x3]]
    E = [
        np.array([[1, 0], [0, 1]], dtype=complex),
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    ]
    return E


def _herm_coords(X):
    return np.array([
        0.5 * (X[0, 0] + X[1, 1]).real,
        0.5 * (X[0, 1] + X[1, 0]).real,
        0.5 * (X[1, 0] - X[0, 1]).imag,
        0.5 * (X[0, 0] - X[1, 1]).real,
    ])


def sl2c_to_so31(A):
    """Image of ``A`` in SL(2, C) under ``X -> A X A^*`` on Hermitian matrices.

    The identity Hermitian matrix (the point ``j`` of upper half-space) is the
    origin of the hyperboloid.
    """
    A = np.asarray(A, dtype=complex)
    det = np.linalg.det(A)
    if abs(det - 1.0) > 1e-9:
        A = A / np.sqrt(det)
    M = np.empty((4, 4))
    for k, E in enumerate(_hermitian_basis()):
        M[:, k] = _herm_coords(A @ E @ A.conj().T)
    return M


def sl2r_to_so21(A):
    """Image of ``A`` in SL(2, R) acting on H^2; the origin is the point ``i``."""
    A = np.asarray(A, dtype=float)
    if np.max(np.abs(np.imag(np.asarray(A, dtype=complex)))) > 0:
        raise DomainError("SL(2,R) generator must be real")
    M4 = sl2c_to_so31(A.astype(complex))
    idx = [0, 1, 3]
    return M4[np.ix_(idx, idx)]
