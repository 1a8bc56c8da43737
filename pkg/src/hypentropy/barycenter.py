"""Barycenter map: weighted geometric median of finitely supported configurations.

A configuration is a unit vector ``f`` of amplitudes on a finite set of
orbit points; its barycenter minimises ``B_f(x) = sum_g f(g)^2 d(g.o, x)``.
The differential of ``f -> Bar(f)`` along tangent directions of the unit
sphere is computed two ways (finite differences on the sphere and implicit
differentiation of the first-order condition) and feeds the Jacobian bound
``(4n / (n-1)^2)^(n/2)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import hyp

BAR_TOL = 1e-10
RANK_TOL = 1e-9
SPHERE_STEP = 1e-5
HESSIAN_STEP = 1e-4
SINGULAR_EXCLUSION = 1e-6
MAX_CONDITION = 1e8
NEWTON_SWITCH = 1e-3
WEISZFELD_STEPS = 50


class DegenerateConfiguration(ValueError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, message, x, grad_norm):
        super().__init__(message)
        self.x = x
        self.grad_norm = grad_norm


class IllConditioned(RuntimeError):
    pass


class NearSingularLocus(RuntimeError):
    pass


def jacobian_bound(n):
    """``(4n / (n-1)^2)^(n/2)``, the barycenter Jacobian bound in dimension ``n``."""
    return (4.0 * n / (n - 1) ** 2) ** (n / 2)


def scale_factor(n):
    """Conformal factor of ``g' = (n-1)^2/(4n) g0``."""
    return (n - 1) ** 2 / (4.0 * n)


@dataclass(frozen=True, eq=False)
class WeightedConfiguration:
    """Finitely supported unit vector ``f``: orbit points with amplitudes ``f(g)``.

    Weights are ``f(g)^2`` and sum to one.
    """

    points: np.ndarray
    amplitudes: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        a = np.asarray(self.amplitudes, dtype=float).ravel()
        if len(P) == 0 or len(P) != len(a):
            raise ValueError("support must be nonempty with one amplitude per point")
        hyp.check_point(P, tol=1e-10)
        if abs(float(a @ a) - 1.0) > 1e-10:
            raise ValueError(f"weights must sum to 1 (got {float(a @ a)!r})")
        if len(P) > 1:
            _, nn = cKDTree(P[:, 1:]).query(P[:, 1:], k=2)
            if np.min(hyp.dist(P, P[nn[:, 1]])) <= 1e-12:
                raise ValueError("support points must be pairwise distinct")
        labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(len(P)))
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_weights(cls, points, weights, labels=()):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        return cls(points, np.sqrt(w / w.sum()), labels)

    @property
    def weights(self):
        return self.amplitudes ** 2

    @property
    def dim(self):
        return self.points.shape[1] - 1

    def __len__(self):
        return len(self.amplitudes)

    def moved(self, g):
        """The configuration ``g . f`` (points moved by the isometry ``g``)."""
        return WeightedConfiguration(hyp.apply(g, self.points), self.amplitudes, self.labels)

    def with_amplitudes(self, a):
        a = np.asarray(a, dtype=float)
        return WeightedConfiguration(self.points, a / np.linalg.norm(a), self.labels)

    def to_dict(self):
        return {"labels": list(self.labels), "points": self.points.tolist(),
                "amplitudes": self.amplitudes.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["points"]), np.array(d["amplitudes"]), tuple(d["labels"]))


@dataclass(frozen=True, eq=False)
class TangentFrame:
    """Orthonormal amplitude perturbations tangent to the sphere at ``config``."""

    config: WeightedConfiguration
    directions: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if V.shape[1] != len(self.config):
            raise ValueError("directions must live on the configuration support")
        if np.max(np.abs(V @ V.T - np.eye(len(V)))) > 1e-10:
            raise ValueError("frame directions must be orthonormal")
        if np.max(np.abs(V @ self.config.amplitudes)) > 1e-10:
            raise ValueError("frame directions must be tangent to the sphere (orthogonal to f)")
        object.__setattr__(self, "directions", V)

    @classmethod
    def random(cls, config, k, rng):
        """Uniformly random ``k``-frame in the tangent space of the sphere."""
        m = len(config)
        if k > m - 1:
            raise ValueError(f"a {k}-frame needs at least {k + 1} support points")
        a = config.amplitudes
        V = rng.standard_normal((m, k))
        V -= np.outer(a, a @ V)
        Q, _ = np.linalg.qr(V)
        Q -= np.outer(a, a @ Q)
        Q, _ = np.linalg.qr(Q)
        return cls(config, Q.T)


# --- objective ---------------------------------------------------------------------

def eval_B(f: WeightedConfiguration, x):
    """``sum_g w_g d(p_g, x)``; ``x`` may be a stack of points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(f.weights @ hyp.dist(f.points, x))
    return hyp.pairwise_dist(x, f.points) @ f.weights


def gradient_B(f: WeightedConfiguration, x):
    """Riemannian gradient of ``B_f`` at ``x`` (ambient tangent vector)."""
    u = hyp.dist_gradient(f.points, np.broadcast_to(x, f.points.shape))
    return f.weights @ u


def hessian_B(f: WeightedConfiguration, x, basis=None):
    """Analytic Hessian ``sum w coth(d) (I - u u^T)`` in an orthonormal basis of ``T_x``."""
    E = hyp.tangent_basis(x) if basis is None else basis
    d = hyp.dist(f.points, x)
    u = _coords(E, hyp.dist_gradient(f.points, np.broadcast_to(x, f.points.shape)))
    c = f.weights / np.tanh(d)
    n = E.shape[0]
    return np.sum(c[:, None, None] * (np.eye(n)[None] - u[:, :, None] * u[:, None, :]), axis=0)


def is_admissible(f: WeightedConfiguration, tol=RANK_TOL):
    """True iff the positively weighted points do not all lie on one geodesic."""
    P = f.points[f.weights > 0]
    if len(P) < 3:
        return False
    base = P[0]
    V = hyp.log_map(base, P[1:])
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    s = np.linalg.svd(hyp.tangent_coords(base, V), compute_uv=False)
    return bool(len(s) > 1 and s[1] > tol)


@dataclass
class BarResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    at_support: int | None = None
    history: list = field(default_factory=list)


def initial_point(f: WeightedConfiguration):
    """Weighted Karcher-mean start: Minkowski centroid then one squared-distance step."""
    y = hyp.project(f.weights @ f.points)
    return hyp.exp_map(y, f.weights @ hyp.log_map(y, f.points))


def bar(f: WeightedConfiguration, tol=BAR_TOL, x0=None, max_iter=500, check=True):
    """Minimiser of ``B_f``: Weiszfeld steps with Armijo backtracking, then Newton polishing.

    Raises :class:`DegenerateConfiguration` for aligned supports and
    :class:`NoConvergence` (with the last iterate) if the tolerance is not met.
    """
    if check and not is_admissible(f):
        raise DegenerateConfiguration("degenerate configuration: support points are aligned")
    P, w = f.points, f.weights
    x = initial_point(f) if x0 is None else hyp.check_point(np.asarray(x0, dtype=float), tol=1e-8)
    res = _support_minimiser(f, _support_candidates(f, x))
    if res is not None:
        return res
    if np.min(hyp.dist(P, x)) < 1e-9:
        x = initial_point(f)
    val = eval_B(f, x)
    history = [val]
    g = gradient_B(f, x)
    gn = float(hyp.tangent_norm(g))
    it = 0
    newton = False
    while it < max_iter:
        it += 1
        # Weiszfeld crawls when the minimiser is close to a support point
        newton = newton or gn < NEWTON_SWITCH or it > WEISZFELD_STEPS
        if newton:
            # the Hessian is positive definite off the support
            E = hyp.tangent_basis(x)
            step = -np.linalg.solve(hessian_B(f, x, E), _coords(E, g)) @ E
        else:
            c = w / hyp.dist(P, x)
            step = (c @ hyp.log_map(x, P)) / c.sum()
        slope = float(hyp.minkowski(g, step))
        t = 1.0
        while True:
            xn = hyp.exp_map(x, t * step)
            if np.min(hyp.dist(P, xn)) >= 1e-9:
                vn = eval_B(f, xn)
                if vn <= val + 1e-4 * t * slope:
                    break
                # near the optimum B is flat to rounding; judge Newton steps by the gradient
                if newton and float(hyp.tangent_norm(gradient_B(f, xn))) < gn:
                    break
            if t < 1e-12:
                res = _support_minimiser(f, _support_candidates(f, x))
                if res is not None:
                    return res
                raise NoConvergence(f"line search failed (gradient norm {gn:.3g})", x, gn)
            t *= 0.5
        x, val = xn, min(vn, val)
        history.append(val)
        g = gradient_B(f, x)
        gn_prev, gn = gn, float(hyp.tangent_norm(g))
        if newton and gn < tol and (gn > 0.5 * gn_prev or gn < 1e-15):
            break
    if gn >= tol:
        res = _support_minimiser(f, _support_candidates(f, x))
        if res is not None:
            return res
        raise NoConvergence(f"no convergence after {it} iterations (gradient norm {gn:.3g})", x, gn)
    return BarResult(x, eval_B(f, x), gn, it, None, history)


def _support_candidates(f: WeightedConfiguration, x, k=32):
    # all points for small supports, else the heaviest and the nearest to x
    if len(f) <= 4 * k:
        return np.arange(len(f))
    heavy = np.argsort(f.weights)[-k:]
    near = np.argsort(hyp.dist(f.points, x))[:k]
    return np.union1d(heavy, near)


def _support_minimiser(f: WeightedConfiguration, candidates=None):
    # Weiszfeld's test: p_k minimises iff the pull of the other weights is at most w_k
    P, w = f.points, f.weights
    if candidates is None:
        candidates = np.arange(len(w))
    for k in candidates[w[candidates] > 0]:
        others = np.arange(len(w)) != k
        u = hyp.dist_gradient(P[others], np.broadcast_to(P[k], P[others].shape))
        pull = float(hyp.tangent_norm(w[others] @ u))
        if pull <= w[k]:
            return BarResult(P[k].copy(), eval_B(f, P[k]), 0.0, 0, int(k))
    return None


def subgradient_norm(f: WeightedConfiguration, x):
    """Norm of the minimal-norm subgradient of ``B_f`` at ``x``."""
    d = hyp.dist(f.points, x)
    on = d < 1e-9
    if not np.any(on):
        return float(hyp.tangent_norm(gradient_B(f, x)))
    k = int(np.argmax(on))
    others = ~on
    u = hyp.dist_gradient(f.points[others], np.broadcast_to(x, f.points[others].shape))
    return max(0.0, float(hyp.tangent_norm(f.weights[others] @ u)) - float(f.weights[k]))


# --- differentials -------------------------------------------------------------

def _coords(E, v):
    # coordinates in a Minkowski-orthonormal tangent basis (rows of E)
    v = np.array(v, dtype=float, copy=True)
    v[..., 0] *= -1.0
    return v @ E.T


def _retract(a, v, h):
    b = a + h * v
    return b / np.linalg.norm(b)


def bar_differential(frame: TangentFrame, method="implicit", base=None):
    """Differential of Bar along the frame, as a ``k x n`` matrix.

    Rows are the images of the frame directions in the orthonormal basis
    :func:`hypentropy.hyp.tangent_basis` at ``Bar(f)``.
    """
    f = frame.config
    res = base or bar(f)
    x = res.x
    if np.min(hyp.dist(f.points, x)) < SINGULAR_EXCLUSION:
        raise NearSingularLocus("barycenter is near singular locus (an orbit point)")
    E = hyp.tangent_basis(x)
    if method == "implicit":
        H = _fd_hessian(f, x, E)
        cond = np.linalg.cond(H)
        if cond > MAX_CONDITION:
            raise IllConditioned(f"ill-conditioned Hessian (condition {cond:.3g})")
        u = _coords(E, hyp.dist_gradient(f.points, np.broadcast_to(x, f.points.shape)))
        # d/dv of grad B = sum 2 a_g v_g u_g
        mixed = 2.0 * (frame.directions * f.amplitudes[None, :]) @ u
        return -np.linalg.solve(H, mixed.T).T
    if method == "fd":
        rows = []
        a = f.amplitudes
        for v in frame.directions:
            xp = bar(f.with_amplitudes(_retract(a, v, SPHERE_STEP)), x0=x, check=False).x
            xm = bar(f.with_amplitudes(_retract(a, v, -SPHERE_STEP)), x0=x, check=False).x
            lp = hyp.log_map(x, xp)
            lm = hyp.log_map(x, xm)
            rows.append(_coords(E, lp - lm) / (2 * SPHERE_STEP))
        return np.array(rows)
    raise ValueError(f"unknown differential method {method!r}")


def _fd_hessian(f, x, E, h=HESSIAN_STEP):
    # central differences of the transported gradient
    n = E.shape[0]
    H = np.empty((n, n))
    for j in range(n):
        xp = hyp.exp_map(x, h * E[j])
        xm = hyp.exp_map(x, -h * E[j])
        gp = hyp.parallel_transport(xp, x, gradient_B(f, xp))
        gm = hyp.parallel_transport(xm, x, gradient_B(f, xm))
        H[:, j] = _coords(E, gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def jacobian(frame: TangentFrame, method="implicit", metric_scale=1.0, D=None):
    """``sqrt(det(D D^T))`` of the differential ``D`` (``k x n``).

    ``metric_scale`` rescales the target metric (``g = metric_scale * g0``),
    multiplying the Jacobian by ``metric_scale^(k/2)``.
    """
    D = bar_differential(frame, method) if D is None else D
    k = D.shape[0]
    det = np.linalg.det(D @ D.T)
    return math.sqrt(max(det, 0.0)) * metric_scale ** (k / 2)


@dataclass
class LengthRatio:
    ratio: float
    source_length: float
    image_length: float
    status: str
    partial: bool = False
    images: np.ndarray | None = None


def length_ratio_check(f: WeightedConfiguration, curve, d_min=0.0):
    """Ratio of ``g0``-length of ``Bar`` along a polyline of amplitudes to its sphere length.

    ``curve`` is an ``(K, m)`` array of amplitude vectors (normalised on
    entry).  Barycenter failures or images closer than ``d_min`` to a support
    point truncate the curve and set ``partial``.
    """
    A = np.atleast_2d(np.asarray(curve, dtype=float))
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    seg = np.arccos(np.clip(np.sum(A[1:] * A[:-1], axis=1), -1.0, 1.0))
    images = []
    x = None
    partial = False
    for a in A:
        try:
            r = bar(f.with_amplitudes(a), x0=x)
        except (NoConvergence, DegenerateConfiguration):
            partial = True
            break
        if np.min(hyp.dist(f.points, r.x)) < d_min:
            partial = True
            break
        x = r.x
        images.append(x)
    images = np.array(images)
    k = len(images)
    src = float(np.sum(seg[: max(0, k - 1)]))
    img = float(np.sum(hyp.dist(images[1:], images[:-1]))) if k > 1 else 0.0
    if src <= 0.0:
        return LengthRatio(0.0, src, img, "degenerate", partial, images)
    return LengthRatio(img / src, src, img, "ok" if not partial else "partial", partial, images)


# --- sweeps ----------------------------------------------------------------------

def random_configuration(points, rng, support=(4, 8), labels=None, max_tries=100):
    """Random admissible configuration on a subset of ``points`` with Dirichlet weights.

    Draws are rejected until the barycenter lies at least
    ``SINGULAR_EXCLUSION`` away from every support point.  Returns
    ``(config, BarResult)``.
    """
    points = np.asarray(points, dtype=float)
    labels = labels if labels is not None else [str(i) for i in range(len(points))]
    for _ in range(max_tries):
        m = int(rng.integers(support[0], support[1] + 1))
        idx = rng.choice(len(points), size=m, replace=False)
        f = WeightedConfiguration.from_weights(points[idx], rng.dirichlet(np.ones(m)),
                                               tuple(labels[i] for i in idx))
        if not is_admissible(f):
            continue
        res = bar(f, check=False)
        if res.at_support is None and np.min(hyp.dist(f.points, res.x)) >= SINGULAR_EXCLUSION:
            return f, res
    raise DegenerateConfiguration("no admissible off-support configuration found")


@dataclass
class SweepRow:
    frame: int
    support: int
    jacobian: float
    bound: float
    margin: float
    fd_relative: float | None = None


@dataclass
class SweepResult:
    rows: list
    failures: list
    bound: float

    @property
    def max_jacobian(self):
        return max((r.jacobian for r in self.rows), default=0.0)

    @property
    def violations(self):
        return [r for r in self.rows if r.jacobian > self.bound * (1 + 1e-3)]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "support", "jacobian", "bound", "margin", "fd_relative"])
            for r in self.rows:
                w.writerow([r.frame, r.support, f"{r.jacobian:.12g}", f"{r.bound:.12g}",
                            f"{r.margin:.12g}", "" if r.fd_relative is None else f"{r.fd_relative:.3g}"])


def jacobian_sweep(points, frames=1000, rng=None, support=(4, 8), fd_every=25, labels=None):
    """Jacobians of Bar along random ``n``-frames at random configurations.

    Every ``fd_every``-th frame also computes the finite-difference
    differential and records its relative deviation from the implicit one.
    Frames that raise are recorded in ``failures`` with their configuration.
    """
    rng = np.random.default_rng(rng)
    n = np.asarray(points).shape[1] - 1
    bound = jacobian_bound(n)
    rows, failures = [], []
    for i in range(frames):
        try:
            f, res = random_configuration(points, rng, support, labels)
            frame = TangentFrame.random(f, n, rng)
            D = bar_differential(frame, "implicit", base=res)
            fd_rel = None
            if fd_every and i % fd_every == 0:
                Dfd = bar_differential(frame, "fd", base=res)
                fd_rel = float(np.linalg.norm(D - Dfd) / max(np.linalg.norm(D), 1e-300))
            J = jacobian(frame, D=D)
            rows.append(SweepRow(i, len(f), J, bound, bound - J, fd_rel))
            if J > bound * (1 + 1e-3):
                failures.append({"frame": i, "reason": "bound violated", "jacobian": J,
                                 "config": f.to_dict(), "directions": frame.directions.tolist()})
        except (NoConvergence, IllConditioned, NearSingularLocus, DegenerateConfiguration) as exc:
            failures.append({"frame": i, "reason": str(exc)})
    return SweepResult(rows, failures, bound)
