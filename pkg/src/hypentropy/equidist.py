"""Equidistribution of geodesic spheres in the unit tangent bundle.

Rays leave a base point in uniformly distributed directions, run for time
``t`` and are folded into the Dirichlet domain together with their
velocities.  :func:`em_statistic` compares the resulting measure with the
Liouville measure on a test function; :func:`crossing_statistic` measures
how much of each ray is spent on length-minimising crossings between two
small balls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import hyp
from . import lattice as lat

DROP_LIMIT = 0.01
CERT_TOL = 1e-6


class FoldingFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class UnitTangentSample:
    """Base points in ``D`` with unit directions and probability weights (arrays, one row per sample)."""

    base: np.ndarray
    direction: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        if np.max(np.abs(hyp.tangent_norm(self.direction) - 1.0), initial=0.0) > 1e-10:
            raise ValueError("directions must be unit vectors")

    def __len__(self):
        return len(self.weight)

    def angles(self):
        """Direction angles in Poincaré-disk coordinates (n = 2)."""
        b = hyp.ball_tangent(self.base, self.direction)
        return np.arctan2(b[:, 1], b[:, 0])


@dataclass
class SphereFlowResult:
    t: float
    x0: np.ndarray
    samples: UnitTangentSample
    endpoints: np.ndarray
    dropped: int
    group: lat.LatticeGroup | None = None
    seed: int | None = None


def uniform_directions(x, rng, N):
    """``N`` unit tangent vectors at ``x`` drawn from the rotation-invariant law."""
    n = len(x) - 1
    E = hyp.tangent_basis(x)
    return hyp.random_directions(rng, n, N) @ E


def fold_samples(domain: lat.DirichletDomain, X, V):
    """Fold base points into ``D`` and carry directions with the same isometries.

    Returns ``(base, direction, ok)`` where ``ok`` marks rows whose folded
    base point passes membership.
    """
    F, acc = domain.fold(X)
    W = np.einsum("mij,mj->mi", acc, V)
    W = hyp.to_tangent(F, W)
    W = W / hyp.tangent_norm(W)[:, None]
    return F, W, domain.contains(F)


def sphere_flow(G: lat.LatticeGroup, x0=None, t=8.0, N=100_000, seed=0, rng=None):
    """Endpoint tangent vectors of the radius-``t`` sphere around ``x0``, folded into ``D``."""
    if not 0 <= t <= hyp.MAX_TRUSTED_RADIUS:
        raise ValueError("t must lie in [0, 25]")
    if N < 1000:
        raise ValueError("sphere_flow needs N >= 1000 rays")
    dom = lat.cached_domain(G)
    x0 = G.basepoint if x0 is None else hyp.check_point(np.asarray(x0, dtype=float))
    rng = np.random.default_rng(seed) if rng is None else rng
    U = uniform_directions(x0, rng, N)
    X = hyp.geodesic(x0, U, t)
    V = hyp.geodesic_velocity(x0, U, t)
    F, W, ok = fold_samples(dom, X, V)
    dropped = int(np.sum(~ok))
    if dropped > DROP_LIMIT * N:
        raise FoldingFailure(f"folding failed for {dropped} of {N} rays")
    keep = np.nonzero(ok)[0]
    w = np.full(len(keep), 1.0 / len(keep))
    return SphereFlowResult(t, x0, UnitTangentSample(F[keep], W[keep], w), X[keep], dropped, G, seed)


# --- test functions --------------------------------------------------------------

def _smooth_step(z):
    """C^1 step: 1 for z <= -1, 0 for z >= 1."""
    z = np.clip(z, -1.0, 1.0)
    return 0.5 - 0.75 * z + 0.25 * z**3


@dataclass(frozen=True)
class SmoothedBox:
    """Smoothed indicator of ``{d(x, center) <= radius, |angle - angle0| <= half_angle}``.

    ``smoothing`` and ``angle_smoothing`` are the half-widths of the
    transition layers.
    """

    center: np.ndarray
    radius: float = 1.0
    angle0: float = 0.0
    half_angle: float = math.pi / 2
    smoothing: float = 0.2
    angle_smoothing: float = 0.2

    def __call__(self, base, direction):
        d = hyp.dist(base, self.center)
        s = UnitTangentSample(base, direction, np.ones(len(base)))
        da = np.abs(np.angle(np.exp(1j * (s.angles() - self.angle0))))
        return (_smooth_step((d - self.radius) / self.smoothing)
                * _smooth_step((da - self.half_angle) / self.angle_smoothing))


def constant_one(base, direction):
    return np.ones(len(base))


def liouville_mean(G: lat.LatticeGroup, f, samples=200_000, seed=12345):
    """MC integral of ``f`` against normalised volume on ``D`` times uniform directions."""
    dom = lat.cached_domain(G)
    rng = np.random.default_rng(seed)
    X = dom.sample(rng, samples)
    V = np.empty_like(X)
    for i in range(0, len(X), 20_000):
        sl = slice(i, i + 20_000)
        V[sl] = _random_unit_tangents(X[sl], rng)
    vals = f(X, V)
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(len(vals)))


def _random_unit_tangents(X, rng):
    # image of uniform directions at o under the boost carrying o to x
    n = X.shape[1] - 1
    th = hyp.random_directions(rng, n, len(X))
    xs = X[:, 1:]
    p = np.sum(xs * th, axis=1, keepdims=True)
    return np.concatenate([p, th + xs * p / (1.0 + X[:, :1])], axis=1)


def em_statistic(result: SphereFlowResult, f, reference=None):
    """``|sum_i w_i f(sample_i) - Liouville mean of f|``.

    ``reference`` may be a precomputed Liouville mean; otherwise it is
    estimated by :func:`liouville_mean`.
    """
    s = result.samples
    emp = float(s.weight @ f(s.base, s.direction))
    if reference is None:
        reference = 1.0 if f is constant_one else liouville_mean(result.group, f)[0]
    return abs(emp - reference)


# --- crossings -------------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def contains(self, X):
        return hyp.dist(X, self.center) <= self.radius


@dataclass
class CrossingResult:
    theta_hat: float
    fractions: np.ndarray
    segments: int
    skipped: int
    rejected: int
    t: float
    t0: float

    def summary(self):
        return {"theta_hat": self.theta_hat, "segments": self.segments, "skipped": self.skipped,
                "rejected": self.rejected, "t": self.t, "t0": self.t0,
                "mean_fraction": float(np.mean(self.fractions))}


def trajectories(G: lat.LatticeGroup, x0, U, t, dt=0.02):
    """Folded positions of the rays ``exp_{x0}(s U)`` at ``s = 0, dt, ..., t``.

    The flow is advanced step by step from the folded state, so each fold
    only has to undo a short move.  Returns an array ``(steps + 1, N, n + 1)``.
    """
    dom = lat.cached_domain(G)
    steps = int(round(t / dt))
    X = np.broadcast_to(x0, U.shape).copy()
    V = U.copy()
    out = np.empty((steps + 1,) + X.shape)
    X, V, _ = fold_samples(dom, X, V)
    out[0] = X
    for k in range(1, steps + 1):
        Xn = hyp.geodesic(X, V, dt)
        Vn = hyp.geodesic_velocity(X, V, dt)
        X, V, _ = fold_samples(dom, hyp.lift(Xn), Vn)
        out[k] = X
    return out


def crossing_statistic(G: lat.LatticeGroup, paths, dt, U_A: Ball, U_B: Ball, t0, metric_radius=None):
    """Fixed-point crossing proportion ``theta_hat`` and per-ray time fractions.

    A crossing runs from the last sample in ``U_A`` to the next sample in
    ``U_B``; it counts when its duration is at most ``t0`` and its length
    matches the quotient distance of its endpoints within ``CERT_TOL``.
    """
    steps, N = paths.shape[0] - 1, paths.shape[1]
    t = steps * dt
    inA = U_A.contains(paths.reshape(-1, paths.shape[2])).reshape(steps + 1, N)
    inB = U_B.contains(paths.reshape(-1, paths.shape[2])).reshape(steps + 1, N)
    if U_A.radius <= 0 or U_B.radius <= 0:
        inA &= False
    starts, ends, rays = [], [], []
    for j in range(N):
        last_a = -1
        for k in range(steps + 1):
            if inA[k, j]:
                last_a = k
            elif inB[k, j] and last_a >= 0:
                if (k - last_a) * dt <= t0:
                    starts.append(last_a)
                    ends.append(k)
                    rays.append(j)
                last_a = -1
    frac = np.zeros(N)
    skipped = rejected = 0
    if starts:
        starts, ends, rays = map(np.asarray, (starts, ends, rays))
        P = paths[starts, rays]
        Q = paths[ends, rays]
        R = metric_radius or 2 * lat.cached_domain(G).bounding_radius + t0 + 0.5
        val, cert = lat._cached_metric(G, round(R, 1)).distances(P, Q)
        length = (ends - starts) * dt
        good = cert & (length <= val + CERT_TOL)
        skipped = int(np.sum(~cert))
        rejected = int(np.sum(cert & ~good))
        np.add.at(frac, rays[good], length[good] / t)
    return CrossingResult(theta_hat(frac), frac, len(starts), skipped, rejected, t, t0)


def theta_hat(fractions):
    """Largest ``theta`` with ``mean(fractions >= theta) >= theta``."""
    f = np.sort(np.asarray(fractions, dtype=float))[::-1]
    if not len(f):
        return 0.0
    share = np.arange(1, len(f) + 1) / len(f)
    # candidate theta = min(f_k, share_k) on the k-th largest fraction
    return float(max(0.0, np.max(np.minimum(f, share))))
