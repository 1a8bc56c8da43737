"""Finitely generated discrete isometry groups of H^n.

Orbit balls are enumerated breadth-first over reduced words with a geometric
pruning cut; orbit points are deduplicated spatially because the word problem
is not solved.  The Dirichlet domain at the basepoint is the intersection of
the half-spaces ``<x, g.o - o> <= 0``, which are linear in hyperboloid
coordinates and hence Euclidean half-spaces in the Klein model.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import HalfspaceIntersection, cKDTree

from . import hyp

DEDUP_TOL = 1e-7
TIE_TOL = 1e-9
DEFAULT_BUDGET = 4_000_000


class OrbitBudgetExceeded(RuntimeError):
    """Raised when an orbit ball would hold more elements than allowed.

    ``partial`` carries the :class:`OrbitBall` enumerated so far.
    """

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


class UncertifiedDistance(RuntimeError):
    def __init__(self, message, value):
        super().__init__(message)
        self.value = value


@dataclass(frozen=True, eq=False)
class LatticeGroup:
    """A discrete group given by generator matrices closed under inversion.

    ``inverse_of[i]`` is the index of the generator inverse to generator ``i``.
    ``covolume`` is the volume of the quotient when it is known in closed form
    (``None`` for infinite or unknown covolume).
    """

    name: str
    generators: np.ndarray
    inverse_of: np.ndarray
    basepoint: np.ndarray
    labels: tuple = ()
    cocompact: bool = False
    covolume: float | None = None

    def __post_init__(self):
        gens = np.asarray(self.generators, dtype=float)
        for g in gens:
            hyp.check_isometry(g)
        hyp.check_point(self.basepoint)
        moved = hyp.dist(self.basepoint, hyp.apply(gens, self.basepoint))
        if np.any(moved <= 1e-6):
            raise hyp.DomainError("a generator (nearly) fixes the basepoint")
        object.__setattr__(self, "generators", gens)

    @property
    def dim(self):
        return self.generators.shape[1] - 1

    @property
    def displacements(self):
        return hyp.dist(self.basepoint, hyp.apply(self.generators, self.basepoint))

    def word_matrix(self, word):
        M = np.eye(self.dim + 1)
        for i in word:
            M = M @ self.generators[i]
        return M

    def label(self, word):
        if not word:
            return "e"
        if self.labels:
            return "".join(self.labels[i] for i in word)
        return ".".join(str(i) for i in word)


@dataclass(eq=False)
class OrbitBall:
    """Orbit points of the basepoint within ``radius``, one per group element.

    Rows are sorted by distance to the basepoint; row 0 is the identity.
    Words are kept as parent pointers into the full (pruned) enumeration and
    rebuilt on demand.
    """

    group: LatticeGroup
    radius: float
    isometries: np.ndarray
    points: np.ndarray
    dists: np.ndarray
    _parent: np.ndarray = field(repr=False, default=None)
    _letter: np.ndarray = field(repr=False, default=None)
    _index: np.ndarray = field(repr=False, default=None)
    partial: bool = False

    def __len__(self):
        return len(self.dists)

    def word(self, i):
        out = []
        j = int(self._index[i])
        while self._parent[j] >= 0:
            out.append(int(self._letter[j]))
            j = int(self._parent[j])
        return tuple(reversed(out))

    @functools.cached_property
    def words(self):
        return [self.word(i) for i in range(len(self))]

    def labels(self):
        return [self.group.label(w) for w in self.words]

    def counts(self, radii):
        """``N(R)`` for each requested radius."""
        return np.searchsorted(self.dists, np.asarray(radii, dtype=float), side="right")


class _PointIndex:
    """Growing point set with near-duplicate queries.

    Keeps a stack of k-d trees whose sizes at least double downwards, so
    each insert costs amortized O(log N) rebuild work.
    """

    def __init__(self, pts):
        self._stack = [(pts, cKDTree(pts))]

    def add(self, pts):
        self._stack.append((pts, None))
        while len(self._stack) > 1 and len(self._stack[-2][0]) <= 2 * len(self._stack[-1][0]):
            top = self._stack.pop()[0]
            below = self._stack.pop()[0]
            self._stack.append((np.concatenate([below, top]), None))
        pts, tree = self._stack[-1]
        if tree is None:
            self._stack[-1] = (pts, cKDTree(pts))

    def contains(self, pts, tol):
        hit = np.zeros(len(pts), dtype=bool)
        for _, tree in self._stack:
            dd, _ = tree.query(pts, distance_upper_bound=tol)
            hit |= np.isfinite(dd)
        return hit


def _reduced_extensions(last, K, inverse_of):
    allowed = np.ones((len(last), K), dtype=bool)
    has = last >= 0
    allowed[np.nonzero(has)[0], inverse_of[last[has]]] = False
    return allowed


def orbit_ball(G: LatticeGroup, R: float, budget: int = DEFAULT_BUDGET,
               dedup_tol: float = DEDUP_TOL) -> OrbitBall:
    """Enumerate the orbit points ``g.o`` with ``dist(o, g.o) <= R``.

    Words are grown breadth-first by right multiplication, so consecutive
    prefixes of a word trace a path of generator-sized steps through the orbit.
    A prefix is extended only while its point lies within ``R + max_g dist(o,
    g.o)``.
    """
    if R < 0:
        raise ValueError("radius must be non-negative")
    if R > hyp.MAX_TRUSTED_RADIUS:
        raise ValueError(f"radius {R} exceeds the trusted radius {hyp.MAX_TRUSTED_RADIUS}")
    n = G.dim
    o = G.basepoint
    gens = G.generators
    K = len(gens)
    cut = R + float(np.max(G.displacements))

    mats = [np.eye(n + 1)[None]]
    pts = [o[None]]
    dists = [np.zeros(1)]
    parent = [np.array([-1])]
    letter = [np.array([-1])]
    total = 1

    frontier_idx = np.array([0])
    frontier_mats = mats[0]
    frontier_last = np.array([-1])
    seen = _PointIndex(o[None])

    while len(frontier_idx):
        allowed = _reduced_extensions(frontier_last, K, G.inverse_of)
        fi, gi = np.nonzero(allowed)
        cand = np.einsum("mij,mjk->mik", frontier_mats[fi], gens[gi])
        cpts = hyp.lift(cand @ o)
        cd = hyp.dist(o, cpts)
        keep = cd <= cut
        fi, gi, cand, cpts, cd = fi[keep], gi[keep], cand[keep], cpts[keep], cd[keep]
        if not len(cd):
            break
        tol = dedup_tol * max(1.0, float(np.max(cpts[:, 0])))
        # against everything found so far
        fresh = ~seen.contains(cpts, tol)
        fi, gi, cand, cpts, cd = fi[fresh], gi[fresh], cand[fresh], cpts[fresh], cd[fresh]
        # within the new layer: keep first occurrence (lowest frontier/generator index)
        if len(cd) > 1:
            pairs = cKDTree(cpts).query_pairs(tol, output_type="ndarray")
            if len(pairs):
                drop = np.zeros(len(cd), dtype=bool)
                drop[np.max(pairs, axis=1)] = True
                keepi = ~drop
                fi, gi, cand, cpts, cd = fi[keepi], gi[keepi], cand[keepi], cpts[keepi], cd[keepi]
        m = len(cd)
        if not m:
            break
        if total + m > budget:
            ball = _assemble(G, R, mats, pts, dists, parent, letter, partial=True)
            raise OrbitBudgetExceeded(f"orbit budget exceeded ({budget} elements)", ball)
        new_idx = np.arange(total, total + m)
        mats.append(cand)
        pts.append(cpts)
        dists.append(cd)
        parent.append(frontier_idx[fi])
        letter.append(gi)
        total += m
        seen.add(cpts)
        frontier_idx, frontier_mats, frontier_last = new_idx, cand, gi

    return _assemble(G, R, mats, pts, dists, parent, letter, partial=False)


def _assemble(G, R, mats, pts, dists, parent, letter, partial):
    mats = np.concatenate(mats)
    pts = np.concatenate(pts)
    dists = np.concatenate(dists)
    inside = np.nonzero(dists <= R + 1e-12)[0]
    order = inside[np.argsort(dists[inside], kind="stable")]
    return OrbitBall(G, R, mats[order], pts[order], dists[order],
                     np.concatenate(parent), np.concatenate(letter), order, partial)


def word_bfs_counts(G: LatticeGroup, radii, max_length: int, dedup_tol: float = DEDUP_TOL):
    """Unpruned oracle: all group elements of word length <= ``max_length``.

    Returns ``(counts, per_length_counts)`` where ``counts[k]`` is the number of
    distinct orbit points within ``radii[k]`` reached by words of length at
    most ``max_length``, and ``per_length_counts[l]`` the same for
    ``max_length = l``.
    """
    radii = np.asarray(radii, dtype=float)
    o = G.basepoint
    gens = G.generators
    K = len(gens)
    seen = o[None].copy()
    seen_d = [0.0]
    frontier = np.eye(G.dim + 1)[None]
    last = np.array([-1])
    history = [np.searchsorted(np.sort(seen_d), radii, side="right")]
    for _ in range(max_length):
        allowed = _reduced_extensions(last, K, G.inverse_of)
        fi, gi = np.nonzero(allowed)
        cand = np.einsum("mij,mjk->mik", frontier[fi], gens[gi])
        cpts = hyp.lift(cand @ o)
        tol = dedup_tol * max(1.0, float(np.max(cpts[:, 0])))
        dd, _ = cKDTree(seen).query(cpts, distance_upper_bound=tol)
        fresh = ~np.isfinite(dd)
        cand, cpts, gi = cand[fresh], cpts[fresh], gi[fresh]
        if len(cpts) > 1:
            pairs = cKDTree(cpts).query_pairs(tol, output_type="ndarray")
            if len(pairs):
                keep = np.ones(len(cpts), dtype=bool)
                keep[np.max(pairs, axis=1)] = False
                cand, cpts, gi = cand[keep], cpts[keep], gi[keep]
        seen = np.concatenate([seen, cpts])
        seen_d.extend(hyp.dist(o, cpts).tolist())
        frontier, last = cand, gi
        history.append(np.searchsorted(np.sort(seen_d), radii, side="right"))
    return history[-1], history


# --- Dirichlet domain --------------------------------------------------------

@dataclass(eq=False)
class DirichletDomain:
    """Dirichlet domain at the basepoint, certified up to ``wall_radius``.

    Walls are stored as orbit points ``p`` together with the isometry ``g``
    (``p = g.o``), its inverse and its word; ``normals[k] = J (p_k - o)`` so
    that ``x`` lies on the basepoint side of wall ``k`` iff ``x @ normals[k] <= 0``.
    """

    group: LatticeGroup
    center: np.ndarray
    wall_points: np.ndarray
    wall_isometries: np.ndarray
    wall_inverses: np.ndarray
    wall_words: list
    normals: np.ndarray
    bounding_radius: float
    wall_radius: float
    vertices: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    @property
    def inradius(self):
        return 0.5 * float(np.min(hyp.dist(self.center, self.wall_points)))

    def wall_values(self, X):
        """Normalised signed wall values ``(d(x,o) - d(x,p))``-like; positive means outside."""
        X = np.atleast_2d(X)
        return X @ self.normals.T

    def contains(self, X, tie_tol=TIE_TOL):
        """Membership with ties broken by shortlex word order (measurable partition)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals = self.wall_values(X)
        # <x, p - o> = cosh d(x,o) - cosh d(x,p); convert to a distance gap only near ties
        inside = np.all(vals <= 0, axis=1)
        near = np.abs(vals) <= 1e-6 * (1.0 + X[:, :1] * self.wall_points[None, :, 0])
        if np.any(near):
            rows, cols = np.nonzero(near)
            d0 = hyp.dist(X[rows], self.center)
            d1 = hyp.dist(X[rows], self.wall_points[cols])
            gap = d0 - d1
            tie = np.abs(gap) <= tie_tol
            for r, c, g, t in zip(rows, cols, gap, tie):
                if not t:
                    continue
                w = self.wall_words[c]
                winv = _inverse_word(w, self.group.inverse_of)
                keep_here = _shortlex(w) > _shortlex(winv)
                vals[r, c] = -1.0 if keep_here else 1.0
            inside = np.all(vals <= 0, axis=1)
        return inside

    def fold(self, X, max_steps=500):
        """Move points into the domain by side-pairing lookups.

        Returns ``(folded, isometries)`` with ``folded[i] = isometries[i] @ X[i]``.
        Points that do not settle (outside the certified region) fall back to an
        orbit-ball nearest-point search.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float)).copy()
        n1 = X.shape[1]
        acc = np.broadcast_to(np.eye(n1), (len(X), n1, n1)).copy()
        active = np.arange(len(X))
        for _ in range(max_steps):
            if not len(active):
                break
            vals = X[active] @ self.normals.T
            scale = X[active, :1] * self.wall_points[None, :, 0]
            rel = vals / scale
            k = np.argmax(rel, axis=1)
            out = rel[np.arange(len(active)), k] > 1e-13
            if not np.any(out):
                break
            idx = active[out]
            ginv = self.wall_inverses[k[out]]
            X[idx] = hyp.lift(np.einsum("mij,mj->mi", ginv, X[idx]))
            acc[idx] = np.einsum("mij,mjk->mik", ginv, acc[idx])
            active = idx
        left = np.nonzero(~self.contains(X))[0]
        if len(left):
            # orbit-ball fallback: jump straight to the nearest orbit point
            r = float(np.max(hyp.dist(self.center, X[left]))) + self.bounding_radius
            ball = cached_orbit_ball(self.group, round(r + 0.5, 1))
            d = hyp.pairwise_dist(X[left], ball.points)
            k = np.argmin(d, axis=1)
            ginv = np.array([hyp.inverse(g) for g in ball.isometries[k]])
            X[left] = hyp.lift(np.einsum("mij,mj->mi", ginv, X[left]))
            acc[left] = np.einsum("mij,mjk->mik", ginv, acc[left])
        return X, acc

    def sample(self, rng, size, batch=None):
        """Points uniform by volume in the domain (rejection from the bounding ball)."""
        if not math.isfinite(self.bounding_radius):
            raise ValueError("domain is not compact; cannot sample uniformly")
        n = self.group.dim
        B = hyp.boost(self.center)
        out = []
        got = 0
        batch = batch or max(1024, 2 * size)
        while got < size:
            r = hyp.sample_ball_radii(rng, n, self.bounding_radius, batch)
            u = hyp.random_directions(rng, n, batch)
            X = hyp.polar_point(n, r, u) @ B.T
            X = X[self.contains(X)]
            out.append(X)
            got += len(X)
        return np.concatenate(out)[:size]

    def volume_mc(self, rng, samples):
        """Monte-Carlo volume with its standard error."""
        if not math.isfinite(self.bounding_radius):
            raise ValueError("domain is not compact; Monte-Carlo volume needs a bounded domain")
        n = self.group.dim
        B = hyp.boost(self.center)
        r = hyp.sample_ball_radii(rng, n, self.bounding_radius, samples)
        u = hyp.random_directions(rng, n, samples)
        X = hyp.polar_point(n, r, u) @ B.T
        hit = self.contains(X).astype(float)
        vb = hyp.ball_volume(n, self.bounding_radius)
        p = hit.mean()
        return vb * p, vb * math.sqrt(p * (1 - p) / samples)


def _inverse_word(w, inverse_of):
    return tuple(int(inverse_of[i]) for i in reversed(w))


def _shortlex(w):
    return (len(w), tuple(w))


def _is_facet(verts, a, n, tol=1e-9):
    # a wall through a single vertex cycle shows up in the dual facets but
    # carries no (n-1)-dimensional face
    on = verts[np.abs(verts @ a - 1.0) < tol * max(1.0, float(np.linalg.norm(a)))]
    if len(on) < n:
        return False
    return np.linalg.matrix_rank(on[1:] - on[0], tol=1e-7) >= n - 1


def dirichlet_domain(G: LatticeGroup, wall_radius: float) -> DirichletDomain:
    """Dirichlet domain at ``G.basepoint`` from the orbit points within ``wall_radius``."""
    ball = orbit_ball(G, wall_radius)
    if len(ball) <= 1:
        raise ValueError("radius too small: no orbit points besides the basepoint")
    n = G.dim
    o = G.basepoint
    J = hyp.lorentz_form(n)
    P = ball.points[1:]
    # move the basepoint to the origin; there <x, p - o> <= 0 reads k.p_ <= p0 - 1
    Binv = hyp.inverse(hyp.boost(o))
    Pc = P @ Binv.T
    A = Pc[:, 1:]
    b = Pc[:, 0] - 1.0
    # scipy form: A x + c <= 0; add the unit box to keep the polytope bounded
    box = np.vstack([np.eye(n), -np.eye(n)])
    hs = np.vstack([np.hstack([A / b[:, None], -np.ones((len(b), 1))]),
                    np.hstack([box, -np.ones((2 * n, 1)) * 1.0000001])])
    hsi = HalfspaceIntersection(hs, np.zeros(n))
    verts = hsi.intersections
    used = set()
    for facet in hsi.dual_facets:
        used.update(int(i) for i in facet if i < len(b))
    walls = np.array([i for i in sorted(used) if _is_facet(verts, A[i] / b[i], n)], dtype=int)
    knorm = np.linalg.norm(verts, axis=1)
    if np.any(knorm >= 1.0 - 1e-12):
        bound = math.inf
    else:
        bound = float(np.max(np.arctanh(knorm)))  # Klein radius -> hyperbolic distance
    if not len(walls):
        raise ValueError("radius too small: empty wall set")
    sel = walls + 1
    pts = ball.points[sel]
    if math.isfinite(bound) and wall_radius < 2 * bound - 1e-9:
        # neighbours up to 2 * bounding radius may still cut the domain
        return dirichlet_domain(G, 2 * bound + 1e-6)
    iso = ball.isometries[sel]
    inv = np.array([hyp.inverse(g) for g in iso])
    normals = (pts - o) @ J
    words = [ball.words[i] for i in sel]
    vk = verts[knorm < 1.0]
    vpts = np.hstack([np.ones((len(vk), 1)), vk]) / np.sqrt(1 - np.sum(vk**2, axis=1))[:, None]
    vpts = vpts @ hyp.boost(o).T
    dom = DirichletDomain(G, o.copy(), pts, iso, inv, words, normals, bound, wall_radius, vpts)
    return dom


# --- quotient distances ------------------------------------------------------

class QuotientMetric:
    """Distances in ``H^n / G`` as minima over an orbit ball of translates."""

    def __init__(self, G: LatticeGroup, R: float):
        self.group = G
        self.ball = orbit_ball(G, R)
        self.R = R

    def distances(self, P, Q, pairwise=False):
        """Quotient distances with certification flags.

        With ``pairwise`` the result is the ``len(P) x len(Q)`` matrix,
        otherwise ``P`` and ``Q`` are matched row by row.  A value ``m`` is
        certified when ``R >= m + d(o, p) + d(o, q)``.
        """
        P = np.atleast_2d(np.asarray(P, dtype=float))
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        o = self.group.basepoint
        rp = hyp.dist(o, P)
        rq = hyp.dist(o, Q)
        Ps = P.copy()
        Ps[:, 0] *= -1.0
        isos = self.ball.isometries
        chunk = max(1, int(4_000_000 // max(1, len(P) * (len(Q) if pairwise else 1))))
        if pairwise:
            best = np.full((len(P), len(Q)), np.inf)
            arg = np.zeros((len(P), len(Q)), dtype=np.int64)
            for s in range(0, len(isos), chunk):
                GQ = np.einsum("gij,qj->gqi", isos[s:s + chunk], Q)
                prods = -np.einsum("pi,gqi->gpq", Ps, GQ)
                k = prods.argmin(axis=0)
                m = np.take_along_axis(prods, k[None], axis=0)[0]
                better = m < best
                best = np.where(better, m, best)
                arg = np.where(better, k + s, arg)
            pi, qi = np.indices(best.shape)
            val = self._refine(P[pi.ravel()], Q[qi.ravel()], arg.ravel(), best.ravel()).reshape(best.shape)
            cert = self.R + 1e-12 >= val + rp[:, None] + rq[None, :]
        else:
            best = np.full(len(P), np.inf)
            arg = np.zeros(len(P), dtype=np.int64)
            for s in range(0, len(isos), chunk):
                GQ = np.einsum("gij,qj->gqi", isos[s:s + chunk], Q)
                prods = -np.einsum("qi,gqi->gq", Ps, GQ)
                k = prods.argmin(axis=0)
                m = prods[k, np.arange(len(k))]
                better = m < best
                best = np.where(better, m, best)
                arg = np.where(better, k + s, arg)
            val = self._refine(P, Q, arg, best)
            cert = self.R + 1e-12 >= val + rp + rq
        return val, cert


    def _refine(self, P, Q, arg, best):
        # arccosh is ill-conditioned near 1; redo short winners with the stable formula
        val = np.arccosh(np.maximum(best, 1.0))
        near = np.nonzero(val <= hyp.NEAR_SWITCH)[0]
        if len(near):
            gq = hyp.apply(self.ball.isometries[arg[near]], Q[near])
            val[near] = hyp.dist(P[near], gq)
        return val


def quotient_distance(G: LatticeGroup, p, q, R: float) -> float:
    """Distance in the quotient between the projections of ``p`` and ``q``.

    Raises :class:`UncertifiedDistance` (carrying the candidate value) when the
    orbit ball of radius ``R`` is too small to certify the minimum.
    """
    val, cert = _cached_metric(G, R).distances(p, q)
    if not cert[0]:
        raise UncertifiedDistance("uncertified: orbit radius too small for this pair", float(val[0]))
    return float(val[0])


@functools.lru_cache(maxsize=16)
def _cached_metric(G, R):
    return QuotientMetric(G, R)


@functools.lru_cache(maxsize=32)
def cached_orbit_ball(G, R):
    return orbit_ball(G, R)


@functools.lru_cache(maxsize=8)
def cached_domain(G):
    r0 = 2.5 * float(np.max(G.displacements))
    return dirichlet_domain(G, r0)


# --- presets -------------------------------------------------------------------

def isometry_from_pairs(p1, p2, q1, q2):
    """Orientation-preserving isometry of H^2 with ``p1 -> q1`` and ``p2 -> q2``."""
    def frame(a, b):
        t = hyp.log_map(a, b)
        t = t / hyp.tangent_norm(t)
        E = hyp.tangent_basis(a)
        c = E @ (t * np.array([-1, 1, 1]))
        nvec = E[0] * -c[1] + E[1] * c[0]
        F = np.column_stack([a, t, nvec])
        if np.linalg.det(F) < 0:
            F[:, 2] *= -1
        return F
    Fp = frame(p1, p2)
    Fq = frame(q1, q2)
    J = hyp.lorentz_form(2)
    return Fq @ J @ Fp.T @ J


def _octagon_vertices():
    rho = math.acosh(1.0 / math.tan(math.pi / 8) ** 2)
    ang = -math.pi / 8 + np.arange(8) * math.pi / 4
    return hyp.polar_point(2, np.full(8, rho), np.column_stack([np.cos(ang), np.sin(ang)]))


def genus2_octagon():
    """Surface group of the regular octagon with boundary word ``a b A B c d C D``.

    Interior angles are pi/4 so the eight vertices close up around one point;
    the Dirichlet domain at the origin is the octagon itself (area 4 pi).
    """
    V = _octagon_vertices()
    labels_order = ["a", "b", "A", "B", "c", "d", "C", "D"]
    side = {lab: k for k, lab in enumerate(labels_order)}

    def pairing(lab):
        i = side[lab]
        j = side[lab.upper()]
        # maps side j onto side i, reversing the boundary direction
        return isometry_from_pairs(V[j], V[(j + 1) % 8], V[(i + 1) % 8], V[i])

    base = {lab: pairing(lab) for lab in "abcd"}
    inv = {lab: hyp.inverse(m) for lab, m in base.items()}

    def comm(x, y):
        return x @ y @ inv_of(x) @ inv_of(y)

    def inv_of(m):
        return hyp.inverse(m)

    # pick the orientation convention under which [a,b][c,d] = 1 holds
    best = None
    for flips in range(16):
        g = {}
        for k, lab in enumerate("abcd"):
            g[lab] = inv[lab] if (flips >> k) & 1 else base[lab]
        rel = comm(g["a"], g["b"]) @ comm(g["c"], g["d"])
        err = np.max(np.abs(rel - np.eye(3)))
        if best is None or err < best[0]:
            best = (err, g)
    g = best[1]
    gens = np.array([g["a"], g["b"], g["c"], g["d"],
                     hyp.inverse(g["a"]), hyp.inverse(g["b"]),
                     hyp.inverse(g["c"]), hyp.inverse(g["d"])])
    return LatticeGroup(
        name="genus2-octagon",
        generators=gens,
        inverse_of=np.array([4, 5, 6, 7, 0, 1, 2, 3]),
        basepoint=hyp.origin(2),
        labels=("a", "b", "c", "d", "A", "B", "C", "D"),
        cocompact=True,
        covolume=4.0 * math.pi,
    )


def free2_schottky(half_translation=1.2):
    """Schottky group on two translations along perpendicular axes through the origin.

    The ping-pong half-planes are disjoint as long as ``sinh(l)**2 > 1``.
    """
    if math.sinh(half_translation) ** 2 <= 1.0:
        raise ValueError("translation too short for the Schottky condition")
    a = hyp.translation(2, 2 * half_translation, axis=1)
    b = hyp.translation(2, 2 * half_translation, axis=2)
    gens = np.array([a, b, hyp.inverse(a), hyp.inverse(b)])
    return LatticeGroup("free2", gens, np.array([2, 3, 0, 1]), hyp.origin(2),
                        labels=("a", "b", "A", "B"), cocompact=False, covolume=None)


FIGURE_EIGHT_SL2C = (
    np.array([[1, 1], [0, 1]], dtype=complex),
    np.array([[1, 0], [-complex(-0.5, math.sqrt(3) / 2), 1]], dtype=complex),
)


def figure_eight():
    """Riley's parabolic representation of the figure-eight knot group in PSL(2, Z[w]).

    Non-cocompact (one cusp, covolume 2.02988...); kept for orbit-growth validation.
    """
    a, b = (hyp.sl2c_to_so31(A) for A in FIGURE_EIGHT_SL2C)
    gens = np.array([a, b, hyp.inverse(a), hyp.inverse(b)])
    return LatticeGroup("figure-eight", gens, np.array([2, 3, 0, 1]), hyp.origin(3),
                        labels=("a", "b", "A", "B"), cocompact=False,
                        covolume=2.029883212819307)


_PRESETS = {
    "genus2-octagon": genus2_octagon,
    "free2": free2_schottky,
    "figure-eight": figure_eight,
}


@functools.lru_cache(maxsize=None)
def preset(name: str) -> LatticeGroup:
    """Built-in groups by name; a path to a group file is loaded instead."""
    if name in _PRESETS:
        return _PRESETS[name]()
    path = Path(name)
    if path.suffix and path.exists():
        return load_group_file(path)
    raise KeyError(f"unknown group preset {name!r}; known: {sorted(_PRESETS)}")


def load_group_file(path) -> LatticeGroup:
    """Read a custom group file.

    Format: a header ``dim <n> model <so(n,1)|sl2r|sl2c>``, optional
    ``name <label>`` and ``#`` comment lines, then one matrix per block (blocks
    separated by blank lines), rows written as whitespace-separated numbers.
    ``sl2c`` entries may be written as Python complex literals (``0.5-1.2j``).
    Inverses of listed generators are appended unless already present.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    dim = model = None
    name = path.stem
    blocks, cur = [], []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if cur:
                blocks.append(cur)
                cur = []
            continue
        tok = line.split()
        if tok[0] == "dim":
            if len(tok) != 4 or tok[2] != "model":
                raise ValueError(f"{path}:{lineno}: header must read 'dim n model <kind>'")
            dim = int(tok[1])
            model = tok[3]
            continue
        if tok[0] == "name":
            name = " ".join(tok[1:])
            continue
        cur.append([complex(t.replace("i", "j")) if model == "sl2c" else float(t) for t in tok])
    if cur:
        blocks.append(cur)
    if dim is None:
        raise ValueError(f"{path}: missing 'dim n model ...' header")
    mats = []
    for k, blk in enumerate(blocks):
        arr = np.array(blk)
        if model in ("so(n,1)", f"so({dim},1)"):
            if arr.shape != (dim + 1, dim + 1):
                raise ValueError(f"{path}: block {k} is {arr.shape}, expected {(dim + 1, dim + 1)}")
            mats.append(arr.astype(float))
        elif model == "sl2r":
            if dim != 2 or arr.shape != (2, 2):
                raise ValueError(f"{path}: sl2r blocks must be 2x2 with dim 2")
            mats.append(hyp.sl2r_to_so21(arr.astype(float)))
        elif model == "sl2c":
            if dim != 3 or arr.shape != (2, 2):
                raise ValueError(f"{path}: sl2c blocks must be 2x2 with dim 3")
            mats.append(hyp.sl2c_to_so31(arr))
        else:
            raise ValueError(f"{path}: unknown model {model!r}")
    gens = list(mats)
    inverse_of = []
    for i, g in enumerate(mats):
        gi = hyp.inverse(g)
        j = next((k for k, h in enumerate(gens) if np.allclose(h, gi, atol=1e-9)), None)
        if j is None:
            gens.append(gi)
            j = len(gens) - 1
        inverse_of.append(j)
    inv = np.zeros(len(gens), dtype=int)
    for i, j in enumerate(inverse_of):
        inv[i] = j
        inv[j] = i
    G = LatticeGroup(name, np.array(gens), inv, hyp.origin(dim))
    return G
