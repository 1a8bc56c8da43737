"""Finite metric measure spaces and Gromov-Prokhorov estimates.

Spaces are sampled from the hyperbolic quotient (exact quotient distances)
or from a conformal metric (shortest paths on the invariant mesh graph with
the sample points attached).  The Gromov-Prokhorov distance is bracketed by
distance-distribution lower bounds and coupling upper bounds.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra, maximum_flow

from . import entropy as ent
from . import hyp
from . import lattice as lat

SCHEMA_VERSION = 1
MAX_POINTS = 2000
FULL_TRIANGLE_CHECK = 600
FLOW_SCALE = 10**9
PROKHOROV_TOL = 1e-6


@dataclass(eq=False)
class FiniteMMSpace:
    """Distance matrix with a probability vector on its points.

    The triangle inequality is checked on all triples when ``N <= 600`` and
    on 2e5 random triples otherwise.
    """

    dist: np.ndarray
    weights: np.ndarray
    ids: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    points: np.ndarray | None = None

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.dist, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        N = len(D)
        if D.shape != (N, N) or len(w) != N:
            raise ValueError("distance matrix must be square with one weight per point")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        if np.max(np.abs(D - D.T), initial=0.0) > 1e-8 or np.max(np.abs(np.diag(D)), initial=0.0) > 1e-8:
            raise ValueError("distance matrix must be symmetric with zero diagonal")
        viol = triangle_violation(D)
        if viol > 1e-8:
            raise ValueError(f"triangle inequality violated by {viol:.3g}")
        self.dist = D
        self.weights = w
        self.ids = list(self.ids) if self.ids else list(range(N))

    def __len__(self):
        return len(self.weights)

    @property
    def diameter(self):
        return float(self.dist.max(initial=0.0))

    def scaled(self, lam):
        return FiniteMMSpace(lam * self.dist, self.weights, self.ids, dict(self.provenance, scale=lam), self.points)

    def to_json(self, path=None):
        doc = {"schema_version": SCHEMA_VERSION, "ids": [str(i) for i in self.ids],
               "dist": self.dist.tolist(), "weights": self.weights.tolist(),
               "provenance": self.provenance}
        text = json.dumps(doc)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
        return cls(np.array(doc["dist"]), np.array(doc["weights"]), doc["ids"], doc["provenance"])


def triangle_violation(D, rng=None, triples=200_000):
    """Largest ``D[i, j] - D[i, k] - D[k, j]`` (exhaustive for small ``N``, sampled otherwise)."""
    N = len(D)
    if N < 3:
        return 0.0
    if N <= FULL_TRIANGLE_CHECK:
        worst = -np.inf
        for k in range(N):
            worst = max(worst, float(np.max(D - D[:, k, None] - D[None, k, :])))
        return worst
    rng = np.random.default_rng(rng)
    i, j, k = rng.integers(0, N, size=(3, triples))
    return float(np.max(D[i, j] - D[i, k] - D[k, j]))


@dataclass(eq=False)
class Coupling:
    source: FiniteMMSpace
    target: FiniteMMSpace
    plan: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.plan, dtype=float)
        if P.shape != (len(self.source), len(self.target)) or np.any(P < 0):
            raise ValueError("coupling plan must be a nonnegative N x M matrix")
        if (np.max(np.abs(P.sum(axis=1) - self.source.weights)) > 1e-10
                or np.max(np.abs(P.sum(axis=0) - self.target.weights)) > 1e-10):
            raise ValueError("coupling marginals do not match the weights")
        self.plan = P

    @classmethod
    def identity(cls, X: FiniteMMSpace, Y: FiniteMMSpace):
        """Diagonal plan for two metrics on the same sample points."""
        if len(X) != len(Y) or np.max(np.abs(X.weights - Y.weights)) > 1e-12:
            raise ValueError("identity coupling needs the same points and weights")
        return cls(X, Y, np.diag(X.weights))


# --- sampling ------------------------------------------------------------------

def sample_mms(metric, N, seed=0, mesh_spacing=0.2, connect_factor=4.5, graph=None):
    """``N`` volume-distributed points of ``D`` with quotient distances.

    ``metric`` is a :class:`~hypentropy.lattice.LatticeGroup` (hyperbolic
    metric) or a :class:`~hypentropy.entropy.ConformalMetric`.
    """
    if not 1 <= N <= MAX_POINTS:
        raise ValueError(f"N must lie in [1, {MAX_POINTS}]")
    rng = np.random.default_rng(seed)
    if isinstance(metric, lat.LatticeGroup):
        X = lat.cached_domain(metric).sample(rng, N)
        D = hyperbolic_distances(metric, X)
        prov = {"metric": "hyperbolic", "group": metric.name, "seed": seed, "N": N}
    else:
        X = sample_conformal_points(metric, N, rng)
        graph = graph or ent.build_mesh_graph(metric, mesh_spacing, connect_factor, seed=seed)
        D = conformal_distances(graph, X)
        prov = {"metric": "conformal", "seed": seed, "N": N, **metric.describe(),
                "mesh_spacing": mesh_spacing}
    return FiniteMMSpace(D, np.full(N, 1.0 / N), list(range(N)), prov, X)


def sample_conformal_points(m: ent.ConformalMetric, N, rng):
    """Rejection sampling of the density ``e^{n u}`` on ``D``."""
    dom = m.domain
    out = []
    got = 0
    while got < N:
        X = dom.sample(rng, max(2 * (N - got), 64))
        acc = rng.random(len(X)) < np.exp(m.dim * (m.u(X) - m.u_max))
        out.append(X[acc])
        got += int(acc.sum())
    return np.concatenate(out)[:N]


def hyperbolic_distances(G: lat.LatticeGroup, X):
    """Pairwise quotient distances, retrying uncertified pairs on a larger orbit ball."""
    rho = lat.cached_domain(G).bounding_radius
    D, cert = lat._cached_metric(G, round(2 * rho + 2.5, 1)).distances(X, X, pairwise=True)
    bad = np.argwhere(~cert)
    if len(bad):
        big = lat._cached_metric(G, round(4 * rho + 0.5, 1))
        val, ok = big.distances(X[bad[:, 0]], X[bad[:, 1]])
        if not np.all(ok):
            pairs = [tuple(p) for p in bad[~ok][:10]]
            raise lat.UncertifiedDistance(f"uncertified quotient distances for pairs {pairs}", float(val[~ok][0]))
        D[bad[:, 0], bad[:, 1]] = val
    D = np.minimum(D, D.T)
    np.fill_diagonal(D, 0.0)
    return D


def _min_edges(src, dst, w, size):
    # csr_matrix sums duplicates; keep the lightest parallel edge instead
    order = np.lexsort((w, dst, src))
    src, dst, w = src[order], dst[order], w[order]
    first = np.ones(len(src), dtype=bool)
    first[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    return csr_matrix((w[first], (src[first], dst[first])), shape=(size, size))


def conformal_distances(graph: ent.MeshGraph, X):
    """Shortest-path quotient distances between points ``X`` of ``D``.

    Sample points join the periodic mesh graph through straight conformal
    segments to every node lift (and every other sample lift) within the
    connection radius.
    """
    m = graph.metric
    K = len(graph.nodes)
    N = len(X)
    rc = graph.connect_radius
    iso = graph.neighbours.isometries
    cells = lat.cached_orbit_ball(m.group, round(2 * m.domain.bounding_radius + rc + m.radius + 0.05, 3))
    src = [graph.src, graph.dst]
    dst = [graph.dst, graph.src]
    wts = [graph.weight, graph.weight]
    for targets, offset in ((graph.nodes, 0), (X, K)):
        T = np.einsum("gij,kj->gki", iso, targets)
        for i in range(N):
            g, k = np.nonzero(hyp.dist(X[i], T) <= rc)
            if offset:
                keep = k != i
                g, k = g[keep], k[keep]
            if not len(k):
                continue
            w = ent.line_integral(m, np.broadcast_to(X[i], (len(k), X.shape[1])), T[g, k], cells.isometries)
            src += [np.full(len(k), K + i), k + offset]
            dst += [k + offset, np.full(len(k), K + i)]
            wts += [w, w]
    A = _min_edges(np.concatenate(src), np.concatenate(dst), np.concatenate(wts), K + N)
    D = dijkstra(A, directed=True, indices=np.arange(K, K + N))[:, K:]
    if not np.all(np.isfinite(D)):
        raise ent.MeshTooCoarse("mesh too coarse: a sample point is not connected")
    D = np.minimum(D, D.T)
    np.fill_diagonal(D, 0.0)
    return D


# --- Prokhorov -----------------------------------------------------------------

def _integer_weights(w, scale=FLOW_SCALE):
    # largest-remainder rounding keeps the total exactly at ``scale``
    x = np.asarray(w, dtype=float) * scale / max(float(np.sum(w)), 1e-300)
    base = np.floor(x).astype(np.int64)
    rem = int(scale - base.sum())
    if rem > 0:
        base[np.argsort(x - base)[::-1][:rem]] += 1
    return base


def prokhorov_deficit(D, mu, nu, eps):
    """``max_A mu(A) - nu(A^eps)`` by max-flow (closed ``eps``-neighbourhoods)."""
    N = len(mu)
    a = _integer_weights(mu)
    b = _integer_weights(nu)
    i, j = np.nonzero(D <= eps)
    S, T = 2 * N, 2 * N + 1
    big = FLOW_SCALE + 1
    rows = np.concatenate([np.full(N, S), i, N + np.arange(N)])
    cols = np.concatenate([np.arange(N), N + j, np.full(N, T)])
    caps = np.concatenate([a, np.full(len(i), big), b]).astype(np.int32)
    g = csr_matrix((caps, (rows, cols)), shape=(2 * N + 2, 2 * N + 2))
    flow = maximum_flow(g, S, T).flow_value
    return (FLOW_SCALE - flow) / FLOW_SCALE


def prokhorov(D, mu, nu):
    """Exact Prokhorov distance of two probability vectors on a finite metric space.

    The deficit is a step function of ``eps`` that only changes at the
    pairwise distances, so the infimum of ``eps`` with ``deficit <= eps`` is
    found by bisection over the sorted distinct distances.
    """
    D = np.asarray(D, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    t = np.unique(np.concatenate([[0.0], D[D < 1.0].ravel(), [1.0]]))
    cache = {}

    def deficit(k):
        if k not in cache:
            cache[k] = prokhorov_deficit(D, mu, nu, t[k])
        return cache[k]

    lo, hi = 0, len(t) - 1
    # smallest k with deficit(t_k) <= t_k; deficit(t_last = 1) <= 1 always
    while lo < hi:
        mid = (lo + hi) // 2
        if deficit(mid) <= t[mid]:
            hi = mid
        else:
            lo = mid + 1
    best = t[lo]
    if lo > 0:
        best = min(best, max(t[lo - 1], deficit(lo - 1)))
    return float(min(best, 1.0))


def prokhorov_bruteforce(D, mu, nu):
    """Prokhorov distance by enumerating all subsets (``N <= 12``)."""
    N = len(mu)
    if N > 12:
        raise ValueError("exhaustive enumeration is limited to 12 points")
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    t = np.unique(np.concatenate([[0.0], np.asarray(D, dtype=float).ravel()]))
    best = 1.0
    for eps in t:
        worst = 0.0
        for r in range(1, N + 1):
            for A in itertools.combinations(range(N), r):
                A = list(A)
                nb = np.any(D[A] <= eps, axis=0)
                worst = max(worst, float(mu[A].sum() - nu[nb].sum()))
        best = min(best, max(float(eps), worst))
    return float(best)


def _greedy_matched(xa, wa, xb, wb, eps):
    # maximum mass of a partial coupling with |x - y| <= eps (sorted atoms, interval windows)
    j0 = 0
    nb = len(xb)
    left = list(wb)
    total = 0.0
    for x, w in zip(xa, wa):
        lo = x - eps
        while j0 < nb and (xb[j0] < lo or left[j0] <= 0.0):
            j0 += 1
        j = j0
        hi = x + eps
        while w > 0.0 and j < nb and xb[j] <= hi:
            take = left[j] if left[j] < w else w
            if take > 0.0:
                left[j] -= take
                w -= take
                total += take
            j += 1
    return total


def prokhorov_1d(xa, wa, xb, wb, tol=PROKHOROV_TOL):
    """Prokhorov distance of two discrete laws on the line, bisecting on ``eps``.

    Feasibility of ``eps`` is the Strassen condition: a partial coupling of
    mass ``>= 1 - eps`` within distance ``eps``, found greedily because the
    admissible windows are nested intervals on sorted atoms.
    """
    ia, ib = np.argsort(xa), np.argsort(xb)
    xa, wa = np.asarray(xa, dtype=float)[ia].tolist(), (np.asarray(wa, dtype=float)[ia] / np.sum(wa)).tolist()
    xb, wb = np.asarray(xb, dtype=float)[ib].tolist(), (np.asarray(wb, dtype=float)[ib] / np.sum(wb)).tolist()
    lo, hi = 0.0, 1.0
    if 1.0 - _greedy_matched(xa, wa, xb, wb, 0.0) <= 1e-15:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if 1.0 - _greedy_matched(xa, wa, xb, wb, mid) <= mid:
            hi = mid
        else:
            lo = mid
    return hi


def distance_distribution(X: FiniteMMSpace):
    """Atoms and masses of ``d(x, x')`` under ``w x w`` (unordered pairs plus the diagonal)."""
    w = X.weights
    i, j = np.triu_indices(len(w), k=1)
    vals = np.concatenate([[0.0], X.dist[i, j]])
    mass = np.concatenate([[float(w @ w)], 2.0 * w[i] * w[j]])
    return vals, mass


def gp_lower_bound(X: FiniteMMSpace, Y: FiniteMMSpace, k=1, triples=300, seed=0):
    """Distance-distribution lower bound for the Gromov-Prokhorov distance.

    ``k = 1`` compares the laws of ``d(x, x')``; ``k = 2`` compares the laws
    of the three distances of an i.i.d. triple in the sup metric on R^3,
    using ``triples`` sampled triples per space and the exact finite
    Prokhorov solver.  The ``k = 2`` value is a Monte-Carlo estimate, not a
    certified bound.
    """
    if k == 1:
        if X is Y:
            return 0.0
        return prokhorov_1d(*distance_distribution(X), *distance_distribution(Y))
    if k != 2:
        raise ValueError("k must be 1 or 2")
    # same stream per space: equal-weight spaces share their index triples
    TX = _triples(X, triples, np.random.default_rng(seed))
    TY = _triples(Y, triples, np.random.default_rng(seed))
    Z = np.concatenate([TX, TY])
    D = np.max(np.abs(Z[:, None, :] - Z[None, :, :]), axis=2)
    mu = np.concatenate([np.full(len(TX), 1.0 / len(TX)), np.zeros(len(TY))])
    nu = np.concatenate([np.zeros(len(TX)), np.full(len(TY), 1.0 / len(TY))])
    return prokhorov(D, mu, nu)


def _triples(X, m, rng):
    idx = rng.choice(len(X), size=(m, 3), p=X.weights)
    d = X.dist
    return np.stack([d[idx[:, 0], idx[:, 1]], d[idx[:, 1], idx[:, 2]], d[idx[:, 0], idx[:, 2]]], axis=1)


def coupling_upper_bound(X: FiniteMMSpace, Y: FiniteMMSpace, plan: Coupling):
    """``inf{eps : (plan x plan)(|d_X - d_Y| > eps) <= eps}`` computed exactly by sorting."""
    if plan.source is not X or plan.target is not Y:
        raise ValueError("coupling does not connect the given spaces")
    a, b = np.nonzero(plan.plan > 0)
    p = plan.plan[a, b]
    dis = np.abs(X.dist[np.ix_(a, a)] - Y.dist[np.ix_(b, b)]).ravel()
    mass = np.outer(p, p).ravel()
    order = np.argsort(dis)[::-1]
    dis, mass = dis[order], mass[order]
    # tail[k] = mass strictly above dis[k]
    above = np.concatenate([[0.0], np.cumsum(mass)[:-1]])
    _, first = np.unique(-dis, return_index=True)
    cand = np.maximum(dis[first], above[first])
    return min(float(np.min(cand, initial=1.0)), 1.0)
