"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

import time

import numpy as np
import pytest

from mzmesh import verify
from mzmesh.domain import model_domain
from mzmesh.mesh import MeshParams, build_mesh

pytestmark = pytest.mark.acceptance


def _elapsed(t0):
    return f"{time.perf_counter() - t0:.1f}s"


def test_c01_mz_two_sided_bound_plane(criterion):
    t0 = time.perf_counter()
    lo, hi, flagged, fails = np.inf, -np.inf, 0, []
    for n in (4, 8, 16):
        for policy in ("center", "random", "corner"):
            rep = verify.mz_experiment("alpha:1.5", n, p=2.0, epsilon=0.25, ensemble_size=50, seed=n, node_policy=policy)
            r = np.array([rec["ratio"] for rec in rep.records])
            lo, hi = min(lo, r.min()), max(hi, r.max())
            flagged += rep.summary["flagged"]
            if not rep.verdict:
                fails.append((n, policy))
    ok = lo >= 0.5 and hi <= 2.0 and flagged == 0 and not fails
    criterion(1, "MZ ratios in [1/2, 2], d=2", ok, f"ratios in [{lo:.4f}, {hi:.4f}], flagged {flagged}, {_elapsed(t0)}")
    assert ok, fails


def test_c02_mz_two_sided_bound_3d(criterion):
    t0 = time.perf_counter()
    lo, hi, flagged, fails = np.inf, -np.inf, 0, []
    for n in (4, 8):
        rep = verify.mz_experiment("alpha:1.75", n, p=3.0, epsilon=0.25, ensemble_size=20, seed=n, d=3)
        r = np.array([rec["ratio"] for rec in rep.records])
        lo, hi = min(lo, r.min()), max(hi, r.max())
        flagged += rep.summary["flagged"]
        if not rep.verdict:
            fails.append(n)
    ok = lo >= 0.5 and hi <= 2.0 and flagged == 0 and not fails
    criterion(2, "MZ ratios in [1/2, 2], d=3, p=3", ok, f"ratios in [{lo:.4f}, {hi:.4f}], flagged {flagged}, {_elapsed(t0)}")
    assert ok, fails


def test_c03_mesh_cardinality(criterion):
    t0 = time.perf_counter()
    rep = verify.cardinality_experiment(n_list=(4, 8, 16, 32, 64))
    slopes = {k: round(v["slope"], 4) for k, v in rep.summary["fits"].items()}
    cases = ((2, 1.25, 0.1), (2, 1.5, 0.1), (2, 2.0, 0.1), (3, 1.75, 0.15), (3, 2.0, 0.15))
    ok = rep.verdict and all(abs(rep.summary["fits"][f"d={d},alpha={a}"]["slope"] - d) <= tol for d, a, tol in cases)
    criterion(3, "cardinality slope = d", ok, f"slopes {slopes}, {_elapsed(t0)}")
    assert ok


def test_c04_partition_exactness(criterion):
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    cases = [(2, a, n, e) for a in (1.25, 1.5, 2.0) for n in (1, 4, 8, 16) for e in (1.0, 0.5, 0.25)]
    cases += [(3, a, n, e) for a in (1.75, 2.0) for n in (1, 2, 4) for e in (1.0, 0.5)]
    for d, alpha, n, eps in cases:
        dom = model_domain(f"alpha:{alpha}", d)
        mesh = build_mesh(dom, MeshParams(n, eps, alpha))
        worst = max(worst, abs(mesh.measures.sum() - 0.25) / 0.25)
        count += 1
    ok = worst <= 1e-12
    criterion(4, "sum of cell measures = |D1|/4", ok, f"{count} meshes, max rel err {worst:.2e}, {_elapsed(t0)}")
    assert ok


def test_c05_bernstein_boundedness(criterion):
    t0 = time.perf_counter()
    slopes, ok = {}, True
    for alpha in (1.25, 1.5, 2.0):
        rep = verify.bernstein_experiment(f"alpha:{alpha}", [4, 8, 16, 32], p=2.0, ensemble_size=50, seed=1)
        slopes[alpha] = round(rep.summary["fit"]["slope"], 4) if rep.summary["fit"] else None
        ok = ok and rep.verdict and not rep.summary["flagged_n"]
    criterion(5, "Bernstein ratio slope <= 0.1", ok, f"slopes {slopes}, {_elapsed(t0)}")
    assert ok


def test_c06_markov_exponent(criterion):
    t0 = time.perf_counter()
    slopes, ok = {}, True
    for alpha in (1.5, 2.0):
        rep = verify.markov_experiment(f"alpha:{alpha}", [4, 8, 16, 32], p=2.0, mu=2.0, ensemble_size=50, seed=1)
        fit = rep.summary["fit"]
        slopes[alpha] = (round(fit["slope"], 4) if fit else None, round(2 / alpha + 0.15, 4))
        ok = ok and rep.verdict and not rep.summary["flagged_n"]
    criterion(6, "Markov slope <= 2/alpha + 0.15", ok, f"(slope, bound) {slopes}, {_elapsed(t0)}")
    assert ok


def test_c07_sharpness_exponent(criterion):
    t0 = time.perf_counter()
    rep = verify.sharpness_experiment(1.5, [8, 16, 32, 64], p=2.0, d=2)
    fit = rep.summary["fit"]
    slope = fit["slope"] if fit else float("nan")
    bound = 2 / 1.5 - 0.15
    shifted = rep.summary["slope_vs_shifted_degree"]["slope"]
    criterion(
        7,
        "sharpness slope >= 2/alpha - 0.15",
        rep.verdict,
        f"slope {slope:.4f} vs bound {bound:.4f} (slope against n + beta + 1/2: {shifted:.4f}), b={rep.summary['b']}, a={rep.summary['a']}, {_elapsed(t0)}",
    )
    assert rep.summary["scale_invariance_dev"] <= verify.SCALE_TOL
    assert slope >= bound


def test_c08_steklov_bounds(criterion):
    t0 = time.perf_counter()
    rep = verify.steklov_experiment(alphas=(1.25, 1.5, 1.75), tol=0.1)
    slopes = {a: {k: round(v, 3) for k, v in f["slopes"].items()} for a, f in rep.summary["fits"].items()}
    criterion(8, "Steklov slopes alpha, alpha-1, alpha-2", rep.verdict, f"{slopes}, {_elapsed(t0)}")
    assert rep.verdict


def test_c09_phi_gadget(criterion):
    t0 = time.perf_counter()
    rep = verify.phi_experiment(models=("quad", "trig"), grid=50, n_points=1000)
    jac = max(r["jacobian_rel_err"] for r in rep.records)
    trip = max(r["round_trip_err"] for r in rep.records)
    viol = sum(r["injectivity_violations"] for r in rep.records)
    ok = rep.verdict and jac <= 1e-6 and trip <= 1e-10 and viol == 0
    criterion(9, "Phi Jacobian, inverse, injectivity", ok, f"jacobian rel err {jac:.1e}, round trip {trip:.1e}, violations {viol}, {_elapsed(t0)}")
    assert ok


def test_c10_distance_sandwich(criterion):
    t0 = time.perf_counter()
    rep = verify.sandwich_experiment(models=("quad", "alpha:1.25", "alpha:1.5", "trig"), n_points=1000)
    worst = min(r["min_dist_over_depth"] / r["c_star"] for r in rep.records)
    criterion(10, "c_* depth <= dist <= depth", rep.verdict, f"min dist/(c_* depth) {worst:.3f}, {_elapsed(t0)}")
    assert rep.verdict


def test_c11_jacobi_identity(criterion):
    t0 = time.perf_counter()
    rep = verify.jacobi_identity_check(n_max=30, betas=(1.0, 7.0, 9.0), tol=1e-7)
    criterion(11, "Jacobi derivative identity", rep.verdict, f"max rel err {rep.summary['max_rel_err']:.1e}, {_elapsed(t0)}")
    assert rep.verdict


def test_c12_oscillation_bound(criterion):
    t0 = time.perf_counter()
    worst, ok = 0.0, True
    for eps in (0.5, 0.25):
        rep = verify.cell_oscillation_check("alpha:1.5", n=8, p=2.0, epsilon=eps, ensemble_size=20, seed=3)
        worst = max(worst, rep.summary["max_lhs_over_rhs"])
        ok = ok and rep.verdict
    criterion(12, "sum |G_j| osc^p <= eps^p ||f||^p", ok, f"max LHS/RHS {worst:.4f}, {_elapsed(t0)}")
    assert ok


def test_c13_doubling_uniformity(criterion):
    t0 = time.perf_counter()
    rep = verify.doubling_experiment(eps_list=(1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0), spread=0.1)
    s = rep.summary
    criterion(13, "doubling constant spread < 10%", rep.verdict, f"constants in [{s['min']:.4f}, {s['max']:.4f}], spread {s['relative_spread']:.3f}, {_elapsed(t0)}")
    assert rep.verdict


def test_c14_classical_sanity(criterion):
    t0 = time.perf_counter()
    rep = verify.classical_sanity_suite(n_max=16, ball_degree=5, ball_count=20)
    s = rep.summary
    ok = rep.verdict and s["max_markov_rel_err"] <= 1e-10
    criterion(14, "Chebyshev Markov equality and ball Bernstein", ok, f"Markov rel err {s['max_markov_rel_err']:.1e}, max ball ratio {s['max_ball_ratio']:.3f}, {_elapsed(t0)}")
    assert ok
