import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hypentropy import entropy as ent
from hypentropy import lattice as lat


def free_word_distances(G, max_length):
    """Distances of all reduced words; exhaustive because the group is free."""
    cur = np.eye(3)[None]
    last = np.array([-1])
    out = [np.zeros(1)]
    for _ in range(max_length):
        fi, gi = np.nonzero(lat._reduced_extensions(last, len(G.generators), G.inverse_of))
        cur = np.einsum("mij,mjk->mik", cur[fi], G.generators[gi])
        last = gi
        out.append(np.arccosh(cur[:, 0, 0]))
    return np.concatenate(out)


@pytest.fixture(scope="module")
def genus2_estimate(genus2):
    return ent.entropy_orbit(genus2, 10.0)


def test_genus2_window(genus2_estimate):
    est = genus2_estimate
    assert abs(est.h - 1.0) <= 0.08
    assert est.fit_window == (5.0, 10.0)
    assert est.h > 0 and est.stderr >= 0


def test_counts_monotone_and_residuals(genus2_estimate, free2):
    for est in (genus2_estimate, ent.entropy_orbit(free2, 12.0)):
        N = est.counts[:, 1]
        assert np.all(np.diff(N) >= 0)
        s = math.sqrt(float(est.residuals @ est.residuals) / (len(N) - 2))
        assert np.max(np.abs(est.residuals)) <= 3 * s


def test_free2_matches_word_oracle(free2):
    D = free_word_distances(free2, 10)
    # length-11 words are all longer than 15, so the oracle is complete up to R = 12
    oracle = ent.fit_entropy(D[D <= 12.0], 12.0)
    est = ent.entropy_orbit(free2, 12.0)
    assert abs(est.h - oracle.h) < 0.05
    assert np.array_equal(est.counts[:, 1], oracle.counts[:, 1])


@given(st.floats(0.1, 10.0))
def test_scaling_covariance(lam):
    rng = np.random.default_rng(0)
    d = np.sort(np.log1p(rng.exponential(size=3000)) * 8)
    base = ent.fit_entropy(d, 8.0)
    scaled = ent.fit_entropy(lam * d, lam * 8.0)
    assert abs(scaled.h - base.h / lam) <= 1e-12 * abs(base.h / lam) + 1e-15


def test_scaling_covariance_orbit(genus2, genus2_estimate):
    for lam in (0.5, 2.0, 3.7):
        est = ent.entropy_orbit(genus2, 10.0, scale=lam)
        assert abs(est.h - genus2_estimate.h / lam) <= 1e-12 * genus2_estimate.h


def test_insufficient_window():
    with pytest.raises(ent.InsufficientWindow, match="insufficient window"):
        ent.fit_entropy([0.0, 1.0, 2.0, 5.0], 6.0)
    with pytest.raises(ent.InsufficientWindow):
        ent.fit_entropy(np.linspace(0, 10, 100), 10.0, fit_window=(5.0, 5.0))


def test_counts_csv(tmp_path, genus2_estimate):
    path = tmp_path / "counts.csv"
    ent.write_counts_csv(genus2_estimate, path)
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == ["R", "N", "logN", "residual"]
    assert len(rows) == 11
    assert all(abs(float(r["logN"]) - math.log(float(r["N"]))) < 1e-12 for r in rows)


def test_bump_must_fit_inside_domain(genus2):
    with pytest.raises(ValueError, match="strictly inside"):
        ent.ConformalMetric(genus2, 0.5, radius=2.0)


def test_bump_profile():
    s = np.array([-2.0, -1.0, 0.0, 0.5, 1.0])
    b = ent.bump_profile(s)
    assert b[0] == b[1] == b[-1] == 0.0 and b[2] == 1.0 and 0 < b[3] < 1


# --- volumes ----------------------------------------------------------------------

def test_flat_volume_gauss_bonnet(genus2):
    v, se = ent.volume_conformal(ent.ConformalMetric(genus2), 200_000, rng=1)
    assert abs(v - 4 * math.pi) < 0.02 * 4 * math.pi


def test_constant_shift_volume(genus2):
    lam = 1.3
    v0, se0 = ent.volume_conformal(ent.ConformalMetric(genus2), 100_000, rng=2)
    v1, se1 = ent.volume_conformal(ent.ConformalMetric(genus2, shift=math.log(lam)), 100_000, rng=2)
    # same random numbers: the ratio is exact up to rounding
    assert abs(v1 - lam**2 * v0) < 1e-9 * v1
    assert abs(v1 - lam**2 * 4 * math.pi) < 4 * se1


def test_bump_increases_volume(genus2):
    v0, _ = ent.volume_conformal(ent.ConformalMetric(genus2), 50_000, rng=3)
    for a in (0.1, 0.5):
        v, _ = ent.volume_conformal(ent.ConformalMetric(genus2, a), 50_000, rng=3)
        assert v > v0


def test_volume_needs_samples(genus2):
    with pytest.raises(ValueError):
        ent.volume_conformal(ent.ConformalMetric(genus2), 100)


def test_normalize_volume(genus2):
    _, s0 = ent.normalize_volume(ent.ConformalMetric(genus2), 100_000, rng=4)
    _, s_err = ent.volume_conformal(ent.ConformalMetric(genus2), 100_000, rng=4)
    assert abs(s0) < 4 * s_err / (4 * math.pi) / 2 + 1e-12
    lam = 1.5
    _, s1 = ent.normalize_volume(ent.ConformalMetric(genus2, shift=math.log(lam)), 100_000, rng=4)
    assert abs(s1 - s0 + math.log(lam)) < 1e-9
    m, _ = ent.normalize_volume(ent.ConformalMetric(genus2, 0.5), 200_000, rng=5)
    v, _ = ent.volume_conformal(m, 200_000, rng=6)
    assert abs(v - 4 * math.pi) < 0.01 * 4 * math.pi


# --- conformal estimator --------------------------------------------------------------

@pytest.fixture(scope="module")
def flat_graph_estimate(genus2):
    return ent.entropy_conformal(ent.ConformalMetric(genus2), 0.2, seed=0)


def test_conformal_flat_agrees_with_orbit(flat_graph_estimate, genus2):
    h_orbit = ent.entropy_orbit(genus2, 12.0).h
    assert abs(flat_graph_estimate.h - h_orbit) < 0.05


def test_conformal_constant_factor(flat_graph_estimate, genus2):
    lam = 1.25
    est = ent.entropy_conformal(ent.ConformalMetric(genus2, shift=math.log(lam)), 0.2, seed=0)
    assert abs(est.h - flat_graph_estimate.h / lam) < 0.05


def test_conformal_normalized_bump_lower_bound(genus2):
    m, _ = ent.normalize_volume(ent.ConformalMetric(genus2, 0.5), 200_000, rng=7)
    est = ent.entropy_conformal(m, 0.2, seed=0)
    assert est.h >= 1.0 - 0.05


def test_mesh_too_coarse(genus2):
    with pytest.raises(ent.MeshTooCoarse, match="mesh too coarse"):
        ent.build_mesh_graph(ent.ConformalMetric(genus2), 0.4, connect_factor=0.5)
