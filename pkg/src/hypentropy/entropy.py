"""Volume entropy estimators.

The hyperbolic estimator counts orbit points ``N(R) = #{g : d(o, g.o) <= R}``
(equivalently homotopy classes of loops at the basepoint) and regresses
``log N`` on ``R``.  Conformal metrics ``e^{2u} g0`` with a Γ-invariant bump
profile ``u`` are handled by a Γ-invariant mesh graph on the universal cover
whose shortest paths stand in for Riemannian distances.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from . import hyp
from . import lattice as lat


class InsufficientWindow(ValueError):
    pass


class MeshTooCoarse(RuntimeError):
    pass


@dataclass(frozen=True)
class EntropyEstimate:
    """Slope of ``log N(R)`` over a fit window.

    ``counts`` has rows ``(R, N(R))`` on the regression grid and
    ``residuals`` the regression residuals of ``log N`` at those radii.
    """

    h: float
    fit_window: tuple
    stderr: float
    counts: np.ndarray
    residuals: np.ndarray
    intercept: float = 0.0
    method: str = "orbit"
    info: dict = field(default_factory=dict)

    def table(self):
        R, N = self.counts[:, 0], self.counts[:, 1]
        return [
            {"R": float(r), "N": int(k) if float(k).is_integer() else float(k), "logN": float(math.log(k)) if k > 0 else float("-inf"),
             "residual": float(e)}
            for r, k, e in zip(R, N, self.residuals)
        ]

    def summary(self):
        return {
            "method": self.method,
            "h": self.h,
            "stderr": self.stderr,
            "fit_window": list(self.fit_window),
            "intercept": self.intercept,
            **self.info,
        }


def write_counts_csv(est: EntropyEstimate, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["R", "N", "logN", "residual"], lineterminator="\n")
        w.writeheader()
        for row in est.table():
            w.writerow({k: _fmt(v) for k, v in row.items()})


def write_summary_json(est: EntropyEstimate, path):
    Path(path).write_text(json.dumps(est.summary(), indent=2, sort_keys=True) + "\n")


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def fit_entropy(dists, R_max, fit_window=None, n_grid=11, method="orbit", min_points=4):
    """Regress ``log N(R)`` against ``R`` for a sorted or unsorted distance list.

    ``fit_window`` defaults to ``(R_max / 2, R_max)``.  The window must contain
    at least ``min_points`` distinct distances, i.e. jumps of ``N``.
    """
    d = np.sort(np.asarray(dists, dtype=float))
    lo, hi = (0.5 * R_max, R_max) if fit_window is None else map(float, fit_window)
    if not lo < hi:
        raise InsufficientWindow("fit window must satisfy R_min < R_max")
    jumps = np.unique(d[(d >= lo) & (d <= hi)])
    if len(jumps) < min_points:
        raise InsufficientWindow(
            f"insufficient window: {len(jumps)} count points in [{lo:g}, {hi:g}], need {min_points}")
    R = np.linspace(lo, hi, n_grid)
    N = np.searchsorted(d, R, side="right")
    if np.any(N <= 0):
        raise InsufficientWindow("insufficient window: N(R) = 0 inside the fit window")
    slope, icept, res, stderr = _linfit(R, np.log(N))
    return EntropyEstimate(slope, (lo, hi), stderr, np.column_stack([R, N]), res, icept, method)


def _linfit(x, y):
    """Least-squares line with the slope standard error from the residuals."""
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icept), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ np.array([slope, icept])
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(res @ res) / max(1, len(x) - 2) / sxx)
    return float(slope), float(icept), res, stderr


def entropy_orbit(G: lat.LatticeGroup, R_max=12.0, fit_window=None, n_grid=11, scale=1.0):
    """Orbit-counting entropy; ``scale`` multiplies every distance (and the window)."""
    ball = lat.cached_orbit_ball(G, float(R_max))
    win = None if fit_window is None else (scale * fit_window[0], scale * fit_window[1])
    est = fit_entropy(scale * ball.dists, scale * R_max, win, n_grid)
    return replace(est, info={"group": G.name, "R_max": scale * R_max, "orbit_points": len(ball)})


# --- conformal metrics ------------------------------------------------------------

def bump_profile(s):
    """Smooth compactly supported profile: ``exp(1 - 1/(1 - s^2))`` on ``|s| < 1``, else 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    """Γ-invariant conformal metric ``e^{2u} g0``.

    ``u = shift + amplitude * bump(d(x, Γ center) / radius)``.  The bump must
    sit strictly inside the Dirichlet domain so its invariant
    extension is smooth.
    """

    group: lat.LatticeGroup
    amplitude: float = 0.0
    radius: float = 1.2
    center: np.ndarray | None = None
    shift: float = 0.0

    def __post_init__(self):
        c = self.group.basepoint if self.center is None else hyp.check_point(self.center)
        object.__setattr__(self, "center", np.array(c, dtype=float))
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        if self.amplitude != 0.0:
            dom = self.domain
            gap = _wall_distance(dom, self.center)
            if not gap > self.radius:
                raise ValueError(
                    f"bump support (radius {self.radius}) is not strictly inside the domain "
                    f"(distance from center to walls {gap:.4f})")

    @property
    def dim(self):
        return self.group.dim

    @property
    def domain(self):
        return lat.cached_domain(self.group)

    @property
    def u_min(self):
        return self.shift + min(0.0, self.amplitude)

    @property
    def u_max(self):
        return self.shift + max(0.0, self.amplitude)

    def u(self, X):
        """Conformal factor exponent at points ``X`` anywhere in the cover."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.amplitude == 0.0:
            return np.full(len(X), self.shift)
        Y, _ = self.domain.fold(X)
        return self.shift + self.amplitude * bump_profile(hyp.dist(Y, self.center) / self.radius)

    def u_near(self, X, isometries):
        """``u`` for points close to the domain, using bump translates by ``isometries``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.amplitude == 0.0:
            return np.full(len(X), self.shift)
        C = hyp.apply(isometries, self.center)
        d = np.min(hyp.pairwise_dist(X, C), axis=1)
        return self.shift + self.amplitude * bump_profile(d / self.radius)

    def rescaled(self, amplitude=None, shift=None):
        return replace(self, amplitude=self.amplitude if amplitude is None else amplitude,
                       shift=self.shift if shift is None else shift)

    def describe(self):
        return {"group": self.group.name, "amplitude": self.amplitude, "radius": self.radius,
                "center": self.center.tolist(), "shift": self.shift}


def _wall_distance(dom, x):
    # distance from x to the bisector {<y, p - o> = 0} is asinh(|<x, N>| / |N|)
    N = dom.wall_points - dom.center
    nn = np.sqrt(hyp.minkowski(N, N))
    return float(np.min(np.arcsinh(np.abs(hyp.minkowski(N, x)) / nn)))


def volume_conformal(m: ConformalMetric, samples=200_000, rng=None):
    """Monte-Carlo ``∫_D e^{n u} dvol0`` with its standard error.

    Points are drawn uniformly from the bounding ball of the domain so the
    estimate does not rely on a known covolume.
    """
    if samples < 10_000:
        raise ValueError("volume estimate needs at least 1e4 samples")
    rng = np.random.default_rng(rng)
    dom = m.domain
    n = m.dim
    if not math.isfinite(dom.bounding_radius):
        raise ValueError("volume needs a compact Dirichlet domain")
    B = hyp.boost(dom.center)
    r = hyp.sample_ball_radii(rng, n, dom.bounding_radius, samples)
    X = hyp.polar_point(n, r, hyp.random_directions(rng, n, samples)) @ B.T
    inside = dom.contains(X)
    vals = np.zeros(samples)
    vals[inside] = np.exp(n * m.u(X[inside]))
    vb = hyp.ball_volume(n, dom.bounding_radius)
    return vb * float(vals.mean()), vb * float(vals.std(ddof=1)) / math.sqrt(samples)


def reference_volume(G: lat.LatticeGroup, samples=400_000, rng=None):
    if G.covolume is not None:
        return float(G.covolume)
    return lat.cached_domain(G).volume_mc(np.random.default_rng(rng), samples)[0]


def normalize_volume(m: ConformalMetric, samples=200_000, rng=None):
    """Constant shift ``s`` so that ``Vol(e^{2(u+s)} g0) = Vol(g0)``.

    Returns ``(metric, s)``.
    """
    vol, _ = volume_conformal(m, samples, rng)
    s = math.log(reference_volume(m.group) / vol) / m.dim
    return m.rescaled(shift=m.shift + s), s


# --- invariant mesh graph ------------------------------------------------------

QUAD_NODES, QUAD_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(eq=False)
class MeshGraph:
    """Γ-periodic mesh: ``nodes`` in the domain plus edge templates.

    Edge template ``e`` joins node ``src[e]`` to ``cell[e] . nodes[dst[e]]``
    where ``cell[e]`` indexes ``neighbours`` (isometries near the identity),
    with weight ``weight[e]`` (conformal length of the geodesic segment).
    """

    metric: ConformalMetric
    nodes: np.ndarray
    neighbours: lat.OrbitBall
    src: np.ndarray
    cell: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    connect_radius: float

    @property
    def edges_per_node(self):
        return len(self.weight) / len(self.nodes)


def mesh_nodes(dom: lat.DirichletDomain, spacing, rng):
    """Greedy Poisson-disk thinning of uniform domain samples; node 0 is the center."""
    n = dom.group.dim
    area = dom.volume_mc(rng, 50_000)[0] if dom.group.covolume is None else dom.group.covolume
    per = math.pi ** (n / 2) / math.gamma(n / 2 + 1) * (spacing / 2) ** n
    cand = dom.sample(rng, int(40 * area / per) + 100)
    acc = np.empty((len(cand) + 1, n + 1))
    acc[0] = dom.center
    k = 1
    thr = math.cosh(spacing)
    for x in cand:
        if np.min(-hyp.minkowski(acc[:k], x)) >= thr:
            acc[k] = x
            k += 1
    return acc[:k].copy()


def line_integral(m: ConformalMetric, P, Q, isometries):
    """``∫ e^u ds`` along the geodesic segments ``P[i] -> Q[i]`` (Gauss-Legendre)."""
    L = hyp.dist(P, Q)
    if m.amplitude == 0.0:
        return L * math.exp(m.shift)
    U = hyp.log_map(P, Q)
    t = 0.5 * (QUAD_NODES + 1.0)
    pts = hyp.exp_map(P[:, None, :], t[None, :, None] * U[:, None, :])
    u = m.u_near(pts.reshape(-1, P.shape[1]), isometries).reshape(len(P), len(t))
    return L * (np.exp(u) @ (0.5 * QUAD_WEIGHTS))


def build_mesh_graph(m: ConformalMetric, spacing=0.2, connect_factor=4.5, seed=0):
    """Nodes at separation ``spacing``; edges join nodes within ``connect_factor * spacing``."""
    rng = np.random.default_rng(seed)
    dom = m.domain
    nodes = mesh_nodes(dom, spacing, rng)
    rc = connect_factor * spacing
    nb = lat.cached_orbit_ball(m.group, round(2 * dom.bounding_radius + rc + 0.05, 3))
    bump_cells = lat.cached_orbit_ball(m.group, round(2 * dom.bounding_radius + rc + m.radius + 0.05, 3))
    EX = np.einsum("gij,kj->gki", nb.isometries, nodes)
    src, cell, dst = [], [], []
    for j in range(len(nodes)):
        d = hyp.dist(nodes[j], EX)
        g, k = np.nonzero(d <= rc)
        keep = ~((g == 0) & (k == j))
        src.append(np.full(int(keep.sum()), j))
        cell.append(g[keep])
        dst.append(k[keep])
    src, cell, dst = (np.concatenate(a) for a in (src, cell, dst))
    w = line_integral(m, nodes[src], EX[cell, dst], bump_cells.isometries)
    comp, _ = connected_components(
        csr_matrix((np.ones(len(src)), (src, dst)), shape=(len(nodes), len(nodes))), directed=False)
    if comp != 1:
        raise MeshTooCoarse(f"mesh too coarse: quotient graph has {comp} components")
    return MeshGraph(m, nodes, nb, src, cell, dst, w, rc)


def cover_distances(graph: MeshGraph, L_max):
    """Graph distances from the basepoint node to every orbit translate of it.

    Only translates of nodes within hyperbolic distance
    ``L_max * exp(-min u)`` of the basepoint are instantiated; no path of
    conformal length ``<= L_max`` can leave that ball.
    """
    m = graph.metric
    G = m.group
    o = G.basepoint
    dom = m.domain
    Lh = L_max * math.exp(-m.u_min) + 1e-9
    cells = lat.orbit_ball(G, Lh + dom.bounding_radius)
    C = cells.isometries
    nodes = graph.nodes
    mnodes = len(nodes)
    CX = np.einsum("gij,kj->gki", C, nodes)
    keep = hyp.dist(o, CX) <= Lh
    cid, nid = np.nonzero(keep)
    index = -np.ones((len(C), mnodes), dtype=np.int64)
    index[cid, nid] = np.arange(len(cid))
    used = np.unique(cid)
    tree = cKDTree(cells.points)
    prod = hyp.lift(np.einsum("cij,ej->cei", C[used], graph.neighbours.points))
    tol = lat.DEDUP_TOL * max(1.0, float(np.max(prod[..., 0])))
    dd, ii = tree.query(prod.reshape(-1, prod.shape[-1]), distance_upper_bound=tol)
    table = -np.ones((len(C), len(graph.neighbours)), dtype=np.int64)
    table[used] = np.where(np.isfinite(dd), ii, -1).reshape(len(used), -1)

    order = np.argsort(graph.src, kind="stable")
    src, ecell, dst, w = (a[order] for a in (graph.src, graph.cell, graph.dst, graph.weight))
    start = np.searchsorted(src, np.arange(mnodes + 1))
    cnt = np.diff(start)[nid]
    rep = np.repeat(np.arange(len(cid)), cnt)
    first = np.repeat(np.cumsum(cnt) - cnt, cnt)
    e = start[nid[rep]] + (np.arange(len(rep)) - first)
    tc = table[cid[rep], ecell[e]]
    ok = tc >= 0
    tn = np.where(ok, index[np.where(ok, tc, 0), dst[e]], -1)
    ok &= tn >= 0
    M = csr_matrix((w[e][ok], (rep[ok], tn[ok])), shape=(len(cid), len(cid)))
    D = dijkstra(M, indices=int(index[0, 0]), limit=L_max * (1 + 1e-12))
    oi = index[:, 0]
    has = oi >= 0
    gd = D[oi[has]]
    reach = np.isfinite(D)
    return CoverSweep(gd[np.isfinite(gd)], D[reach], nid[reach],
                      {"cover_nodes": int(len(cid)), "cover_edges": int(M.nnz)})


@dataclass(frozen=True)
class CoverSweep:
    """Shortest-path sweep from the basepoint lift.

    ``orbit`` holds distances to the translates of the basepoint, ``node``
    and ``node_id`` the distances to every reached cover node and the index
    of the mesh node it copies.
    """

    orbit: np.ndarray
    node: np.ndarray
    node_id: np.ndarray
    info: dict


COVER_RADIUS = 8.0


def entropy_conformal(m: ConformalMetric, mesh_spacing=0.2, R_max=None, fit_window=None,
                      connect_factor=4.5, seed=0, n_grid=11, graph=None, counting="volume"):
    """Entropy of ``e^{2u} g0`` from shortest paths on the invariant mesh graph.

    ``counting="volume"`` regresses the log conformal volume of graph balls
    (each cover node carries ``e^{n u}`` times a uniform cell share);
    ``counting="orbit"`` counts basepoint translates instead, which is much
    coarser at the radii a mesh can afford.

    ``R_max`` (conformal length) defaults to ``COVER_RADIUS * exp(min u)`` so
    the instantiated part of the cover stays a hyperbolic ball of radius
    ``COVER_RADIUS`` whatever the volume shift.
    """
    if counting not in ("volume", "orbit"):
        raise ValueError("counting must be 'volume' or 'orbit'")
    if R_max is None:
        R_max = COVER_RADIUS * math.exp(m.u_min)
    graph = graph or build_mesh_graph(m, mesh_spacing, connect_factor, seed)
    sweep = cover_distances(graph, R_max)
    info = dict(sweep.info)
    if counting == "orbit":
        est = fit_entropy(sweep.orbit, R_max, fit_window, n_grid, method="conformal-graph-orbit")
    else:
        share = reference_volume(m.group) / len(graph.nodes)
        w = share * np.exp(m.dim * m.u(graph.nodes))
        est = fit_weighted_growth(sweep.node, w[sweep.node_id], R_max, fit_window, n_grid)
        info["orbit_h"] = fit_entropy(sweep.orbit, R_max, fit_window, n_grid).h
    info.update({"group": m.group.name, "R_max": R_max, "mesh_spacing": mesh_spacing,
                 "connect_radius": graph.connect_radius, "mesh_nodes": len(graph.nodes),
                 "edges_per_node": graph.edges_per_node, "counting": counting,
                 **{f"metric_{k}": v for k, v in m.describe().items() if k != "center"}})
    return replace(est, info=info)


def fit_weighted_growth(dists, weights, R_max, fit_window=None, n_grid=11):
    """Slope of ``log V(R)`` with ``V(R)`` the total weight of points within ``R``.

    The ``counts`` column then holds ``V(R)`` rather than an integer count.
    """
    order = np.argsort(dists, kind="stable")
    d = np.asarray(dists, dtype=float)[order]
    cw = np.cumsum(np.asarray(weights, dtype=float)[order])
    lo, hi = (0.5 * R_max, R_max) if fit_window is None else map(float, fit_window)
    if not lo < hi:
        raise InsufficientWindow("fit window must satisfy R_min < R_max")
    R = np.linspace(lo, hi, n_grid)
    k = np.searchsorted(d, R, side="right")
    if np.any(k <= 0) or len(np.unique(k)) < 4:
        raise InsufficientWindow("insufficient window: too few reached nodes in the fit window")
    V = cw[k - 1]
    slope, icept, res, stderr = _linfit(R, np.log(V))
    return EntropyEstimate(slope, (lo, hi), stderr, np.column_stack([R, V]), res, icept,
                           "conformal-graph-volume")
