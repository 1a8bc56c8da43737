"""Monte-Carlo construction of the spherical embedding ``Psi_c``.

``Psi_c(x)`` is the ℓ²-unit vector of square roots of the normalised cell
integrals ``∫_{gD} e^{-c d(x, u)} dvol(u)`` over orbit translates of the
Dirichlet domain.  Cells are truncated to ``d(x, g.o) <= R_psi`` and each
integral is a sum over one fixed uniform sample set of ``D`` moved by ``g``,
so every evaluation shares the same random numbers.

Finite differences (energy, pullback Jacobian) keep the support chosen at
the centre point for the whole stencil.  With a fixed support the
normalised map satisfies the energy bound ``c^2 / 4`` exactly, whatever the
sample set, so the bound is a clean numerical check.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import barycenter as bc
from . import hyp
from . import lattice as lat
from .entropy import reference_volume


class TruncationInsufficient(RuntimeError):
    pass


@dataclass(frozen=True)
class PsiParams:
    """Parameters of ``Psi_c``.

    ``R_psi=None`` picks the smallest radius (multiple of 0.5) whose tail
    estimate is below ``eps_tail``.  ``groups`` is the number of
    jackknife groups the sample set is split into.
    """

    c: float
    R_psi: float | None = None
    samples: int = 1000
    seed: int = 0
    eps_tail: float = 0.25
    groups: int = 10
    max_radius: float = 12.0

    def validate(self, n):
        if not self.c > n - 1:
            raise ValueError(f"c = {self.c} must exceed n - 1 = {n - 1} (integrability of e^(-c d))")
        if self.samples < 1000:
            raise ValueError("Psi_c needs at least 1e3 Monte-Carlo samples")
        if self.samples % self.groups:
            raise ValueError("samples must be a multiple of the jackknife group count")
        if self.R_psi is not None and not 0 < self.R_psi <= hyp.MAX_TRUSTED_RADIUS:
            raise ValueError("R_psi must lie in (0, 25]")


def _sphere_area(n):
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _weight(n, c):
    # e^{-c r} sinh(r)^{n-1} without overflow at large r
    return lambda r: math.exp((n - 1 - c) * r) * (0.5 * -math.expm1(-2.0 * r)) ** (n - 1)


@functools.lru_cache(maxsize=256)
def total_mass(n, c):
    """``∫_{H^n} e^{-c d(o, u)} dvol(u)``."""
    if n == 2:
        return 2.0 * math.pi / (c * c - 1.0)
    return _sphere_area(n) * quad(_weight(n, c), 0, math.inf)[0]


def tail_fraction(n, c, R):
    """Share of ``total_mass`` outside the ball of radius ``R``."""
    R = max(R, 0.0)
    if n == 2:
        I = math.pi * (math.exp((1 - c) * R) / (c - 1) - math.exp(-(1 + c) * R) / (c + 1))
    else:
        I = _sphere_area(n) * quad(_weight(n, c), R, math.inf)[0]
    return I / total_mass(n, c)


@dataclass
class PsiValue:
    """``Psi_c(x)`` with its support, raw masses and tail estimate.

    ``group_masses[g, k]`` is the contribution of jackknife group ``g`` to
    the raw mass of support cell ``k``; ``deficit`` is ``1 - sum(mass) / Z``
    with ``Z`` the full integral, to be compared with ``tail``.
    """

    x: np.ndarray
    config: bc.WeightedConfiguration
    isometries: np.ndarray
    masses: np.ndarray
    group_masses: np.ndarray
    tail: float
    deficit: float
    words: list = field(default_factory=list)

    @property
    def weights(self):
        return self.config.weights

    def weight_stderr(self):
        """Jackknife standard errors of the normalised weights."""
        return _jackknife_std(self.group_masses, lambda m: m / m.sum())

    def deficit_stderr(self):
        """Jackknife standard error of ``deficit``."""
        G = len(self.group_masses)
        per = self.group_masses.sum(axis=1)
        loo = (per.sum() - per) * G / (G - 1)
        Z = float(self.masses.sum()) / (1.0 - self.deficit)
        return math.sqrt((G - 1) / G * float(np.sum((loo - loo.mean()) ** 2))) / Z

    def to_dict(self):
        return {"x": self.x.tolist(), "tail": self.tail, "deficit": self.deficit,
                "weights": dict(zip(self.config.labels, self.weights.tolist()))}


def _jackknife_std(group_masses, stat):
    G = len(group_masses)
    tot = group_masses.sum(axis=0)
    reps = np.array([stat(tot - group_masses[g]) for g in range(G)])
    mean = reps.mean(axis=0)
    return np.sqrt((G - 1) / G * np.sum((reps - mean) ** 2, axis=0))


class PsiMap:
    """``Psi_c`` for a cocompact group with a fixed Monte-Carlo sample set."""

    def __init__(self, G: lat.LatticeGroup, params: PsiParams):
        params.validate(G.dim)
        self.group = G
        self.params = params
        self.n = G.dim
        self.domain = lat.cached_domain(G)
        if not math.isfinite(self.domain.bounding_radius):
            raise ValueError("Psi_c needs a cocompact group")
        rng = np.random.default_rng(params.seed)
        self.samples = self.domain.sample(rng, params.samples)
        self.cell_volume = reference_volume(G)
        self.omega = self.cell_volume / params.samples
        self._offset = self._busemann_factor(rng)
        self.R_psi = params.R_psi if params.R_psi is not None else self._auto_radius()

    def _busemann_factor(self, rng, directions=64):
        # mean of e^{-c b_xi(u)} over samples u and uniform boundary directions xi
        xi = hyp.random_directions(rng, self.n, directions)
        u = self.samples
        b = np.log(u[:, :1] - u[:, 1:] @ xi.T)
        return float(np.mean(np.exp(-self.params.c * b)))

    def tail_estimate(self, R):
        return tail_fraction(self.n, self.params.c, R) * self._offset

    def _auto_radius(self):
        R = 1.0
        while self.tail_estimate(R) > self.params.eps_tail:
            R += 0.5
            if R > self.params.max_radius:
                raise TruncationInsufficient(
                    f"truncation insufficient: tail above {self.params.eps_tail:g} "
                    f"even at R_psi = {self.params.max_radius}")
        return R

    def support(self, x):
        """Isometries ``g`` with ``d(x, g.o) <= R_psi`` and their words."""
        x = hyp.check_point(np.asarray(x, dtype=float), tol=1e-9)
        # one shared ball serves every x in D
        r = max(float(hyp.dist(self.group.basepoint, x)), self.domain.bounding_radius)
        ball = lat.cached_orbit_ball(self.group, math.ceil(2 * (self.R_psi + r)) / 2)
        keep = np.nonzero(hyp.dist(x, ball.points) <= self.R_psi)[0]
        return ball.isometries[keep], [ball.words[i] for i in keep], ball.points[keep]

    def group_masses(self, X, isometries):
        """Raw masses per jackknife group: shape ``(len(X), groups, len(isometries))``."""
        X = np.atleast_2d(X)
        J = hyp.lorentz_form(self.n)
        inv = J @ np.transpose(isometries, (0, 2, 1)) @ J
        # -<g^{-1} x, u> = x . (J g J u) up to the sign flip on component 0
        Ys = np.einsum("gij,pj->pgi", inv, X)
        Ys[..., 0] *= -1.0
        Ys = Ys.reshape(-1, self.n + 1)
        G = self.params.groups
        M = len(self.samples)
        out = np.empty((len(Ys), G))
        step = max(1, 2_000_000 // M)
        for s in range(0, len(Ys), step):
            q = -(Ys[s:s + step] @ self.samples.T)
            e = np.exp(-self.params.c * np.arccosh(np.maximum(q, 1.0)))
            out[s:s + step] = e.reshape(len(e), G, -1).sum(axis=2)
        out *= self.omega
        return out.reshape(len(X), len(isometries), G).transpose(0, 2, 1)

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        iso, words, pts = self.support(x)
        gm = self.group_masses(x, iso)[0]
        m = gm.sum(axis=0)
        p = m / m.sum()
        tail = self.tail_estimate(self.R_psi)
        if tail > self.params.eps_tail:
            raise TruncationInsufficient(f"truncation insufficient: tail estimate {tail:.3g}")
        cfg = bc.WeightedConfiguration(pts, np.sqrt(p), tuple(self.group.label(w) for w in words))
        deficit = 1.0 - float(m.sum()) / total_mass(self.n, self.params.c)
        return PsiValue(x, cfg, iso, m, gm, tail, deficit, words)

    # --- finite differences ------------------------------------------------------

    def partials(self, x, h=1e-3, iso=None):
        """Central differences of ``Psi`` along an orthonormal basis of ``T_x``.

        Returns ``(D, group_masses)`` where ``D[j]`` is the ℓ² vector
        ``(Psi(exp(h e_j)) - Psi(exp(-h e_j))) / 2h`` on the support fixed at
        ``x`` and ``group_masses`` has shape ``(2n, groups, support)``.
        """
        x = np.asarray(x, dtype=float)
        if iso is None:
            iso = self.support(x)[0]
        E = hyp.tangent_basis(x)
        stencil = np.concatenate([hyp.exp_map(x, h * E), hyp.exp_map(x, -h * E)])
        gm = self.group_masses(stencil, iso)
        return _partials_from_masses(gm.sum(axis=1), h, self.n), gm

    def energy(self, x, fd_step=1e-3):
        """``sum_j |d Psi(e_j)|^2`` with jackknife error and a step-halving check."""
        D, gm = self.partials(x, fd_step)
        val = float(np.sum(D * D))
        G = self.params.groups
        tot = gm.sum(axis=1)
        reps = np.array([np.sum(_partials_from_masses(tot - gm[:, g], fd_step, self.n) ** 2)
                         for g in range(G)])
        jack = math.sqrt((G - 1) / G * float(np.sum((reps - reps.mean()) ** 2)))
        D2, _ = self.partials(x, fd_step / 2)
        half = float(np.sum(D2 * D2))
        bound = self.params.c ** 2 / 4.0
        return EnergyResult(val, jack, bound, bound - val, half, jack > 0.2 * val)

    def jacobian(self, x, fd_step=1e-3):
        """``sqrt(det Gram)`` of the partials, with the Gram matrix."""
        D, _ = self.partials(x, fd_step)
        gram = D @ D.T
        return math.sqrt(max(float(np.linalg.det(gram)), 0.0)), gram


def _partials_from_masses(m, h, n):
    psi = np.sqrt(m / m.sum(axis=1, keepdims=True))
    return (psi[:n] - psi[n:]) / (2.0 * h)


@dataclass(frozen=True)
class EnergyResult:
    energy: float
    jackknife: float
    bound: float
    margin: float
    half_step: float
    flagged: bool

    @property
    def relative_error(self):
        return self.jackknife / self.energy if self.energy > 0 else math.inf


@dataclass(frozen=True)
class PullbackResult:
    volume: float
    stderr: float
    jacobians: np.ndarray
    min_gram_eig: float
    upper_bound: float
    spherical_value: float


def spherical_volume_value(n, vol):
    """``((n-1)^2 / 4n)^(n/2) Vol``."""
    return ((n - 1) ** 2 / (4.0 * n)) ** (n / 2) * vol


def pullback_volume(psi_map: PsiMap, points=100, rng=None, fd_step=1e-3, X=None):
    """Monte-Carlo ``∫_D Jac(Psi_c) dvol`` over uniform points of ``D``."""
    if X is None:
        X = psi_map.domain.sample(np.random.default_rng(rng), points)
    jac = np.empty(len(X))
    eig = np.inf
    for i, x in enumerate(X):
        jac[i], gram = psi_map.jacobian(x, fd_step)
        eig = min(eig, float(np.min(np.linalg.eigvalsh(gram))))
    vol = psi_map.cell_volume
    n = psi_map.n
    c = psi_map.params.c
    return PullbackResult(vol * float(jac.mean()), vol * float(jac.std(ddof=1)) / math.sqrt(len(X)),
                          jac, eig, (c * c / (4.0 * n)) ** (n / 2) * vol, spherical_volume_value(n, vol))


def lipschitz_ratio(psi_map: PsiMap, x, y):
    """``|Psi_c(x) - Psi_c(y)|_2 / d(x, y)``, cells matched by their orbit points."""
    a, b = psi_map.psi(x), psi_map.psi(y)
    D = hyp.pairwise_dist(a.config.points, b.config.points)
    i, j = np.nonzero(D < 1e-6)
    dot = float(a.config.amplitudes[i] @ b.config.amplitudes[j])
    return math.sqrt(max(2.0 - 2.0 * dot, 0.0)) / float(hyp.dist(x, y))


def bar_psi(psi_map: PsiMap, x):
    """``(Bar(Psi_c(x)), d(Bar(Psi_c(x)), x))``."""
    v = psi_map.psi(x)
    if not bc.is_admissible(v.config):
        raise bc.DegenerateConfiguration("truncated Psi_c(x) is not admissible")
    y = bc.bar(v.config, x0=np.asarray(x, dtype=float), check=False).x
    return y, float(hyp.dist(y, x))
