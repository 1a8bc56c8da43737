"""Experiment runners shared by the command line and the acceptance suite.

Each runner takes a parameter mapping (defaults in :data:`DEFAULTS`), a
group and a root seed, and returns a :class:`Report` with tables, a summary,
named pass/fail checks and failure dumps.  Nothing here writes files.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from . import barycenter as bc
from . import embedding as emb
from . import entropy as ent
from . import equidist as eq
from . import hyp
from . import lattice as lat
from . import mms

KINDS = ("entropy", "barycenter-sweep", "embed-check", "equidist", "stability")

DEFAULTS = {
    "entropy": {
        "group": "genus2-octagon", "method": "orbit", "R_max": 12.0, "fit_window": None,
        "n_grid": 11, "amplitudes": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], "bump_radius": 1.2,
        "normalize": True, "mesh_spacing": 0.2, "connect_factor": 4.5, "scale": 2.0,
    },
    "barycenter-sweep": {
        "group": "figure-eight", "frames": 1000, "orbit_radius": 4.0, "support": [4, 8],
        "fd_every": 25,
    },
    "embed-check": {
        "group": "genus2-octagon", "c_values": [1.2, 1.35, 1.5, 1.75, 2.0], "energy_c": None,
        "energy_points": 50, "samples": 1000, "pullback_points": 150, "seeds": [0, 1, 2],
        "R_psi": None, "eps_tail": 0.25, "fd_step": 1e-3, "bar_psi_points": 5,
    },
    "equidist": {
        "group": "genus2-octagon", "t_values": [2.0, 8.0], "N": 100_000, "seeds": [0, 1, 2, 3, 4],
        "box_radius": 1.0, "box_half_angle": math.pi / 2, "box_smoothing": 0.2,
        "liouville_samples": 200_000, "crossing_t": 10.0, "crossing_N": 2000, "crossing_dt": 0.02,
        "t0": 3.0, "t0_sensitivity": [1.5, 2.0, 3.0, 4.0], "ball_offset": 0.8, "ball_radius": 0.5,
    },
    "stability": {
        "group": "genus2-octagon", "amplitudes": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], "N": 500,
        "bump_radius": 1.2, "mesh_spacing": 0.2, "connect_factor": 4.5,
    },
}


@dataclass
class Report:
    kind: str
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    dumps: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.checks.values())


def derive_seed(root, name):
    """Per-module seed: ``SeedSequence(root, spawn_key=(crc32(name),))`` reduced to 63 bits."""
    ss = np.random.SeedSequence(int(root), spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def resolve_params(kind, params):
    out = dict(DEFAULTS[kind])
    out.update(params or {})
    return out


# --- validation ------------------------------------------------------------------

def check_params(kind, p):
    """Precondition diagnostics ``(key, message)`` for merged parameters ``p``."""
    diags = []

    def need(cond, key, msg):
        if not cond:
            diags.append((key, msg))

    def positive(key):
        need(isinstance(p[key], (int, float)) and p[key] > 0, key, f"{key} must be a positive number")

    if kind == "entropy":
        need(p["method"] in ("orbit", "conformal"), "method", "method must be 'orbit' or 'conformal'")
        need(isinstance(p["R_max"], (int, float)) and 0 < p["R_max"] <= hyp.MAX_TRUSTED_RADIUS,
             "R_max", "R_max must lie in (0, 25] (trusted radius)")
        need(isinstance(p["n_grid"], int) and p["n_grid"] >= 4, "n_grid", "n_grid must be an integer >= 4")
        if p["fit_window"] is not None:
            w = p["fit_window"]
            need(isinstance(w, list) and len(w) == 2 and 0 <= w[0] < w[1] <= p["R_max"],
                 "fit_window", "fit_window must be [lo, hi] with 0 <= lo < hi <= R_max")
        positive("bump_radius")
        positive("mesh_spacing")
        positive("scale")
    elif kind == "barycenter-sweep":
        need(isinstance(p["frames"], int) and p["frames"] >= 1, "frames", "frames must be a positive integer")
        positive("orbit_radius")
        s = p["support"]
        need(isinstance(s, list) and len(s) == 2 and 3 <= s[0] <= s[1], "support",
             "support must be [min, max] with 3 <= min <= max")
    elif kind == "embed-check":
        need(isinstance(p["samples"], int) and p["samples"] >= 1000, "samples",
             "samples must be an integer >= 1000 (Monte-Carlo budget)")
        need(p["samples"] % 10 == 0 if isinstance(p["samples"], int) else False, "samples",
             "samples must be a multiple of 10 (jackknife groups)")
        if p["R_psi"] is not None:
            need(0 < p["R_psi"] <= hyp.MAX_TRUSTED_RADIUS, "R_psi", "R_psi must lie in (0, 25]")
        positive("eps_tail")
    elif kind == "equidist":
        for key in ("t_values",):
            need(all(0 <= t <= hyp.MAX_TRUSTED_RADIUS for t in p[key]), key, "times must lie in [0, 25]")
        need(isinstance(p["N"], int) and p["N"] >= 1000, "N", "N must be an integer >= 1000")
        need(isinstance(p["crossing_N"], int) and p["crossing_N"] >= 1000, "crossing_N",
             "crossing_N must be an integer >= 1000")
        positive("t0")
        need(all(t > 0 for t in p["t0_sensitivity"]), "t0_sensitivity", "t0_sensitivity values must be positive")
        positive("crossing_dt")
    elif kind == "stability":
        need(isinstance(p["N"], int) and 1 <= p["N"] <= mms.MAX_POINTS, "N",
             f"N must be an integer in [1, {mms.MAX_POINTS}]")
        positive("bump_radius")
        positive("mesh_spacing")
    return diags


def check_group_params(kind, p, G):
    """Diagnostics that need the group (dimension, compactness)."""
    diags = []
    n = G.dim
    if kind == "embed-check":
        cs = list(p["c_values"]) + ([p["energy_c"]] if p["energy_c"] is not None else [])
        for c in cs:
            if not c > n - 1:
                diags.append(("c_values", f"c = {c} must exceed n - 1 = {n - 1} "
                                          "(integrability precondition of e^(-c d))"))
    if kind in ("embed-check", "equidist", "stability") and not G.cocompact:
        diags.append(("group", f"{kind} needs a cocompact group"))
    if kind == "barycenter-sweep" and n < 2:
        diags.append(("group", "barycenter sweeps need n >= 2"))
    return diags


# --- runners -----------------------------------------------------------------------

def run(kind, params, G, seed=0, threads=1):
    p = resolve_params(kind, params)
    return _RUNNERS[kind](p, G, seed, max(1, int(threads)))


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def run_entropy(p, G, seed, threads):
    n = G.dim
    rep = Report("entropy")
    if p["method"] == "orbit":
        win = tuple(p["fit_window"]) if p["fit_window"] else None
        est = ent.entropy_orbit(G, p["R_max"], win, p["n_grid"])
        lam = float(p["scale"])
        scaled = ent.entropy_orbit(G, p["R_max"], win, p["n_grid"], scale=lam)
        # g' = ((n-1)^2 / 4n) g0 scales lengths by (n-1) / (2 sqrt n)
        gscale = (n - 1) / (2.0 * math.sqrt(n))
        primed = ent.entropy_orbit(G, p["R_max"], win, p["n_grid"], scale=gscale)
        target = 2.0 * math.sqrt(n)
        rel = est.h / (n - 1) - 1.0
        rel_primed = primed.h / target - 1.0
        rep.summary = {**est.summary(), "h_scaled": scaled.h, "scale": lam,
                       "h_rescaled_metric": primed.h, "target_rescaled": target,
                       "relative_error": rel, "relative_error_rescaled": rel_primed}
        rep.tables["counts"] = est.table()
        rep.checks["scaling_covariance"] = abs(scaled.h - est.h / lam) <= 1e-12 * abs(est.h)
        rep.checks["rescaled_same_relative_error"] = abs(rel_primed - rel) <= 1e-12
        if G.cocompact:
            rep.checks["equality_case_window"] = abs(est.h - (n - 1)) <= 0.08 * (n - 1)
        return rep
    rows = []
    base = ent.ConformalMetric(G, 0.0, p["bump_radius"])

    def one(a):
        m = base.rescaled(amplitude=a)
        s = 0.0
        if p["normalize"]:
            m, s = ent.normalize_volume(m, rng=derive_seed(seed, f"entropy-volume-{a}"))
        est = ent.entropy_conformal(m, p["mesh_spacing"], connect_factor=p["connect_factor"],
                                    seed=derive_seed(seed, "entropy-mesh"), n_grid=p["n_grid"])
        return {"amplitude": a, "shift": s, "h": est.h, "stderr": est.stderr,
                "orbit_h": est.info.get("orbit_h"), "R_max": est.info["R_max"]}

    rows = _map(one, list(p["amplitudes"]), threads)
    rep.tables["sweep"] = rows
    rep.summary = {"method": "conformal", "min_h": min(r["h"] for r in rows), "n": n}
    if p["normalize"] and G.cocompact:
        rep.checks["entropy_inequality"] = all(r["h"] >= n - 1 - 0.05 for r in rows)
    return rep


def run_barycenter_sweep(p, G, seed, threads):
    ball = lat.orbit_ball(G, p["orbit_radius"])
    res = bc.jacobian_sweep(ball.points, p["frames"], rng=derive_seed(seed, "barycenter"),
                            support=tuple(p["support"]), fd_every=p["fd_every"], labels=ball.labels())
    rep = Report("barycenter-sweep")
    rep.tables["jacobians"] = [r.__dict__ for r in res.rows]
    fd = [r.fd_relative for r in res.rows if r.fd_relative is not None]
    rep.summary = {"frames": p["frames"], "evaluated": len(res.rows), "max_jacobian": res.max_jacobian,
                   "bound": res.bound, "violations": len(res.violations), "failures": len(res.failures),
                   "max_fd_relative": max(fd) if fd else None}
    rep.failures = res.failures
    rep.checks["jacobian_bound"] = not res.violations
    rep.checks["differentials_agree"] = (max(fd) if fd else 0.0) <= 1e-4
    rep.checks["frames_evaluated"] = len(res.rows) >= 0.99 * p["frames"]
    return rep


def run_embed_check(p, G, seed, threads):
    n = G.dim
    rep = Report("embed-check")
    c_e = p["energy_c"] if p["energy_c"] is not None else 1.2 * (n - 1)
    pm = emb.PsiMap(G, emb.PsiParams(c_e, p["R_psi"], p["samples"], derive_seed(seed, "embed-samples"),
                                     p["eps_tail"]))
    rng = np.random.default_rng(derive_seed(seed, "embed-points"))
    X = pm.domain.sample(rng, p["energy_points"])
    erows, worst_extra = [], 0.0
    for i, x in enumerate(X):
        e = pm.energy(x, p["fd_step"])
        erows.append({"c": c_e, "point": i, "energy": e.energy, "bound": e.bound, "margin": e.margin,
                      "jackknife": e.jackknife, "half_step": e.half_step})
        worst_extra = max(worst_extra, e.energy - e.bound * 1.05 - 3 * e.jackknife)
    rep.tables["energy"] = erows
    v = pm.psi(X[0])
    rep.dumps["psi_point0"] = v.to_dict()
    rep.checks["energy_bound"] = all(r["energy"] <= r["bound"] * 1.05 for r in erows)
    rep.checks["energy_no_violation_beyond_3sigma"] = worst_extra <= 0.0
    rep.checks["jackknife_below_20pct"] = all(r["jackknife"] < 0.2 * r["energy"] for r in erows)
    rep.checks["tail_matches_deficit"] = abs(v.deficit - v.tail) <= 3 * v.deficit_stderr()

    # one truncation radius for the whole sweep, so c is the only thing that varies
    R_sweep = p["R_psi"]
    if R_sweep is None:
        R_sweep = emb.PsiMap(G, emb.PsiParams(min(p["c_values"]), None, p["samples"],
                                              derive_seed(seed, "embed-0"), p["eps_tail"])).R_psi

    def cell(args):
        c, s = args
        m = emb.PsiMap(G, emb.PsiParams(c, R_sweep, p["samples"], derive_seed(seed, f"embed-{s}"),
                                        p["eps_tail"]))
        r = emb.pullback_volume(m, p["pullback_points"], rng=derive_seed(seed, f"pullback-{s}"))
        return {"c": c, "seed": s, "R_psi": m.R_psi, "volume": r.volume, "stderr": r.stderr,
                "spherical": r.spherical_value, "upper": r.upper_bound, "min_gram_eig": r.min_gram_eig}

    prow = _map(cell, [(c, s) for c in p["c_values"] for s in p["seeds"]], threads)
    rep.tables["pullback"] = prow
    med = [float(np.median([r["volume"] for r in prow if r["c"] == c])) for c in p["c_values"]]
    rep.summary = {"energy_c": c_e, "R_psi": pm.R_psi, "R_psi_sweep": R_sweep, "max_energy": max(r["energy"] for r in erows),
                   "bound": c_e**2 / 4, "median_pullback": dict(zip(map(str, p["c_values"]), med)),
                   "spherical_value": prow[0]["spherical"] if prow else None}
    rep.checks["pullback_above_spherical"] = all(r["volume"] >= r["spherical"] - 3 * r["stderr"] for r in prow)
    rep.checks["pullback_below_upper"] = all(r["volume"] <= r["upper"] * 1.05 for r in prow)
    rep.checks["pullback_monotone_in_c"] = all(b >= a for a, b in zip(med, med[1:]))
    rep.checks["gram_psd"] = all(r["min_gram_eig"] >= -1e-8 for r in prow)
    drows = []
    for i, x in enumerate(X[: p["bar_psi_points"]]):
        try:
            _, d = emb.bar_psi(pm, x)
            drows.append({"c": c_e, "point": i, "displacement": d})
        except (bc.DegenerateConfiguration, bc.NoConvergence) as exc:
            rep.failures.append({"point": i, "reason": str(exc)})
    rep.tables["bar_psi"] = drows
    # no constant is available for comparison, so the ratios are only logged
    lrows = [{"c": c_e, "pair": i, "distance": float(hyp.dist(x, y)),
              "ratio": emb.lipschitz_ratio(pm, x, y)}
             for i, (x, y) in enumerate(zip(X[: p["bar_psi_points"]], X[1: p["bar_psi_points"] + 1]))]
    rep.tables["lipschitz"] = lrows
    rep.summary["max_lipschitz_ratio"] = max((r["ratio"] for r in lrows), default=None)
    return rep


def run_equidist(p, G, seed, threads):
    rep = Report("equidist")
    o = G.basepoint
    box = eq.SmoothedBox(o, p["box_radius"], 0.0, p["box_half_angle"], p["box_smoothing"], p["box_smoothing"])
    ref, ref_se = eq.liouville_mean(G, box, p["liouville_samples"], derive_seed(seed, "liouville"))
    rows, mass = [], 0.0
    for s in p["seeds"]:
        for t in p["t_values"]:
            r = eq.sphere_flow(G, o, t, p["N"], derive_seed(seed, f"sphere-{s}"))
            rows.append({"seed": s, "t": t, "statistic": eq.em_statistic(r, box, ref), "dropped": r.dropped})
            mass = max(mass, eq.em_statistic(r, eq.constant_one))
    rep.tables["em"] = rows
    tmin, tmax = min(p["t_values"]), max(p["t_values"])
    stat = {(r["seed"], r["t"]): r["statistic"] for r in rows}
    wins = sum(stat[(s, tmax)] < stat[(s, tmin)] for s in p["seeds"])
    rep.checks["mass_conservation"] = mass <= 1e-12
    rep.checks["em_statistic_small"] = all(stat[(s, tmax)] < 0.05 for s in p["seeds"])
    rep.checks["em_trend"] = wins >= math.ceil(0.8 * len(p["seeds"]))
    rng = np.random.default_rng(derive_seed(seed, "crossing"))
    U = eq.uniform_directions(o, rng, p["crossing_N"])
    paths = eq.trajectories(G, o, U, p["crossing_t"], p["crossing_dt"])
    d = np.zeros(G.dim)
    d[0] = 1.0
    A = eq.Ball(hyp.polar_point(G.dim, p["ball_offset"], d), p["ball_radius"])
    B = eq.Ball(hyp.polar_point(G.dim, p["ball_offset"], -d), p["ball_radius"])
    cr = eq.crossing_statistic(G, paths, p["crossing_dt"], A, B, p["t0"])
    rep.tables["crossing"] = [{"ray": i, "fraction": float(f)} for i, f in enumerate(cr.fractions)]
    rep.tables["t0_sensitivity"] = [
        {"t0": t0, **eq.crossing_statistic(G, paths, p["crossing_dt"], A, B, t0).summary()}
        for t0 in p["t0_sensitivity"]]
    rep.summary = {"liouville_mean": ref, "liouville_stderr": ref_se, "trend_wins": wins,
                   **{f"median_t{t:g}": float(np.median([stat[(s, t)] for s in p["seeds"]]))
                      for t in p["t_values"]}, **cr.summary()}
    rep.checks["theta_hat_positive"] = cr.theta_hat > 0
    return rep


def run_stability(p, G, seed, threads):
    rep = Report("stability")
    n = G.dim
    ref = mms.sample_mms(G, p["N"], derive_seed(seed, "stability-reference"))
    base = ent.ConformalMetric(G, 0.0, p["bump_radius"])

    def one(a):
        m, s = ent.normalize_volume(base.rescaled(amplitude=a), rng=derive_seed(seed, f"entropy-volume-{a}"))
        graph = ent.build_mesh_graph(m, p["mesh_spacing"], p["connect_factor"], derive_seed(seed, "entropy-mesh"))
        est = ent.entropy_conformal(m, graph=graph)
        X = mms.sample_mms(m, p["N"], derive_seed(seed, f"stability-sample-{a}"), graph=graph)
        Y = mms.FiniteMMSpace(mms.hyperbolic_distances(G, X.points), X.weights)
        return {"amplitude": a, "shift": s, "h": est.h, "h_excess": est.h - (n - 1),
                "gp_lower": mms.gp_lower_bound(X, ref),
                "coupling_upper_same_points": mms.coupling_upper_bound(X, Y, mms.Coupling.identity(X, Y))}

    rows = _map(one, list(p["amplitudes"]), threads)
    rep.tables["sweep"] = rows
    rho = float(spearmanr([r["h_excess"] for r in rows], [r["gp_lower"] for r in rows]).statistic) \
        if len(rows) > 2 else float("nan")
    rep.summary = {"spearman": rho, "N": p["N"]}
    rep.checks["stability_rank_correlation"] = bool(rho > 0.5) if len(rows) > 2 else True
    zero = [r for r in rows if r["amplitude"] == 0.0]
    if zero:
        rep.checks["unperturbed_gp_small"] = zero[0]["gp_lower"] < 0.08
        rep.checks["unperturbed_h"] = abs(zero[0]["h"] - (n - 1)) <= 0.08 * (n - 1)
    return rep


_RUNNERS = {
    "entropy": run_entropy,
    "barycenter-sweep": run_barycenter_sweep,
    "embed-check": run_embed_check,
    "equidist": run_equidist,
    "stability": run_stability,
}
