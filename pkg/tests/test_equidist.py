import math

import numpy as np
import pytest

from hypentropy import equidist as eq
from hypentropy import hyp
from hypentropy import lattice as lat


@pytest.fixture(scope="module")
def dom(genus2):
    return lat.cached_domain(genus2)


@pytest.fixture(scope="module")
def box(genus2):
    return eq.SmoothedBox(genus2.basepoint, 1.0, 0.0, math.pi / 2, 0.2, 0.2)


def test_input_validation(genus2):
    with pytest.raises(ValueError, match="25"):
        eq.sphere_flow(genus2, t=30.0, N=1000)
    with pytest.raises(ValueError, match="1000"):
        eq.sphere_flow(genus2, t=1.0, N=10)
    o = genus2.basepoint
    with pytest.raises(ValueError, match="unit"):
        eq.UnitTangentSample(o[None], 2 * hyp.tangent_basis(o)[:1], np.ones(1))


def test_initial_directions_uniform(genus2):
    N = 20_000
    r = eq.sphere_flow(genus2, t=0.0, N=N, seed=1)
    th = r.samples.angles()
    for k in range(1, 5):
        assert abs(np.mean(np.cos(k * th))) < 3 / math.sqrt(N)
        assert abs(np.mean(np.sin(k * th))) < 3 / math.sqrt(N)


def test_endpoints_and_folding(genus2, dom):
    t = 8.0
    r = eq.sphere_flow(genus2, t=t, N=5000, seed=2)
    assert np.max(np.abs(hyp.dist(r.x0, r.endpoints) - t)) < 1e-9
    s = r.samples
    assert np.all(dom.contains(s.base))
    assert np.max(np.abs(hyp.tangent_norm(s.direction) - 1)) < 1e-10
    assert np.max(np.abs(hyp.minkowski(s.base, s.direction))) < 1e-8
    assert abs(s.weight.sum() - 1) < 1e-12 and r.dropped == 0


def test_mass_conservation(genus2):
    for t in (0.0, 2.0, 8.0):
        r = eq.sphere_flow(genus2, t=t, N=2000, seed=3)
        assert eq.em_statistic(r, eq.constant_one) < 1e-12


def test_isometry_invariance(genus2, dom, box):
    rng = np.random.default_rng(4)
    x0 = genus2.basepoint
    U = eq.uniform_directions(x0, rng, 3000)
    X, V = hyp.geodesic(x0, U, 6.0), hyp.geodesic_velocity(x0, U, 6.0)
    g = genus2.generators[1]
    gX, gV = hyp.apply(g, X), np.einsum("ij,mj->mi", g, V)
    F1, W1, ok1 = eq.fold_samples(dom, X, V)
    F2, W2, ok2 = eq.fold_samples(dom, gX, gV)
    assert ok1.all() and ok2.all()
    assert np.max(hyp.dist(F1, F2)) < 1e-8
    assert abs(np.mean(box(F1, W1)) - np.mean(box(F2, W2))) < 1e-9


def test_smooth_step_and_box(genus2, box):
    z = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    assert np.allclose(eq._smooth_step(z), [1, 1, 0.5, 0, 0])
    o = genus2.basepoint
    E = hyp.tangent_basis(o)
    inside = box(o[None], E[:1])
    behind = box(o[None], -E[:1])
    assert inside[0] == 1.0 and behind[0] == 0.0
    far = hyp.polar_point(2, 3.0, np.array([1.0, 0.0]))
    assert box(far[None], hyp.tangent_basis(far)[:1])[0] == 0.0


def test_liouville_mean(genus2, box):
    m, se = eq.liouville_mean(genus2, eq.constant_one, samples=5000)
    assert m == 1.0 and se == 0.0
    m1, se1 = eq.liouville_mean(genus2, box, samples=40_000, seed=1)
    m2, se2 = eq.liouville_mean(genus2, box, samples=40_000, seed=2)
    assert 0 < m1 < 1 and abs(m1 - m2) < 4 * math.hypot(se1, se2)


def test_random_unit_tangents(genus2, dom):
    X = dom.sample(np.random.default_rng(0), 500)
    V = eq._random_unit_tangents(X, np.random.default_rng(1))
    assert np.max(np.abs(hyp.minkowski(X, V))) < 1e-12
    assert np.max(np.abs(hyp.tangent_norm(V) - 1)) < 1e-12


def test_theta_hat_unit_cases():
    assert eq.theta_hat([]) == 0.0
    assert eq.theta_hat(np.zeros(5)) == 0.0
    assert eq.theta_hat(np.ones(4)) == 1.0
    assert eq.theta_hat(np.full(6, 0.5)) == 0.5
    assert eq.theta_hat([1.0, 0.0, 0.0, 0.0]) == 0.25
    assert eq.theta_hat([0.9, 0.6, 0.1, 0.0]) == 0.5


@pytest.fixture(scope="module")
def paths(genus2):
    U = eq.uniform_directions(genus2.basepoint, np.random.default_rng(5), 200)
    return U, eq.trajectories(genus2, genus2.basepoint, U, 6.0, 0.02)


def test_trajectories_match_direct_fold(genus2, dom, paths):
    U, P = paths
    assert P.shape == (301, 200, 3)
    assert np.max(hyp.dist(P[0], genus2.basepoint)) < 1e-12
    for k in (50, 150):
        direct, _, ok = eq.fold_samples(dom, hyp.geodesic(genus2.basepoint, U, k * 0.02), U)
        good = ok & dom.contains(P[k])
        assert good.mean() > 0.99
        assert np.max(hyp.dist(direct[good], P[k][good])) < 1e-8


def _balls(genus2, r):
    d = np.array([1.0, 0.0])
    A = eq.Ball(hyp.polar_point(2, 0.8, d), r)
    B = eq.Ball(hyp.polar_point(2, 0.8, -d), r)
    return A, B


def test_crossings_certified(genus2, paths):
    _, P = paths
    A, B = _balls(genus2, 0.5)
    cr = eq.crossing_statistic(genus2, P, 0.02, A, B, 3.0)
    assert cr.segments > 0
    assert cr.skipped == 0
    assert np.all((cr.fractions >= 0) & (cr.fractions <= 1))
    assert 0 < cr.theta_hat <= 1
    assert set(cr.summary()) >= {"theta_hat", "segments", "rejected"}


def test_empty_ball_gives_zero(genus2, paths):
    _, P = paths
    A, B = _balls(genus2, 0.5)
    cr = eq.crossing_statistic(genus2, P, 0.02, eq.Ball(A.center, 0.0), B, 3.0)
    assert cr.theta_hat == 0.0 and cr.segments == 0
    assert not np.any(cr.fractions)
