import json
import math

import numpy as np
import pytest

from mzmesh.domain import GraphDomain, model_domain, polynomial_graph
from mzmesh.errors import ParameterError
from mzmesh.integrate import lp_norm_region, discrete_lp_norm
from mzmesh.mesh import MeshParams, build_mesh
from mzmesh.poly import MultiPoly, random_ensemble
from mzmesh import verify


def test_slope_fit_recovers_power_law():
    n = np.array([4, 8, 16, 32])
    fit = verify.slope_fit(n, 3.0 * n**1.5)
    assert fit["slope"] == pytest.approx(1.5, abs=1e-12)
    assert fit["band_lo"] <= 1.5 <= fit["band_hi"]
    with pytest.raises(ParameterError):
        verify.slope_fit([2], [3])


def test_report_serialisation_is_deterministic():
    rep = verify.doubling_experiment(eps_list=(1e-3, 1.0))
    again = verify.doubling_experiment(eps_list=(1e-3, 1.0))
    assert rep.to_json() == again.to_json()
    data = json.loads(rep.to_json())
    assert set(data) == {"experiment", "criterion", "verdict", "config", "summary", "records"}
    assert "wall_time" not in data and "wall_time" in rep.to_dict(include_timing=True)
    assert rep.to_csv().splitlines()[0] == "experiment,key,value"
    assert rep.verdict_line().startswith("doubling: PASS")


def test_report_cleans_non_finite_values():
    rep = verify.ExperimentReport("x", {}, [{"v": float("nan")}], {"w": np.float64(np.inf)}, True, "c")
    data = json.loads(rep.to_json())
    assert data["records"][0]["v"] is None and data["summary"]["w"] is None


# --- MZ ratios ---


def test_constant_functions_have_ratio_one():
    dom = model_domain("alpha:1.5")
    mesh = build_mesh(dom, MeshParams(3, 0.5, 1.5))
    f = MultiPoly(2, 0, dom.bounding_box("G"), np.array([[1.0, -2.0, 0.5]]))
    r = (discrete_lp_norm(f, mesh, 2) / lp_norm_region(f, dom, 2).value) ** 2
    assert np.allclose(r, 1.0, rtol=1e-12)


def test_mz_small_run():
    rep = verify.mz_experiment("alpha:1.5", 4, ensemble_size=8, seed=3)
    assert rep.verdict
    assert rep.summary["scale_invariance_dev"] <= verify.SCALE_TOL
    assert len(rep.records) == 8 and rep.summary["flagged"] == 0


def test_mz_requires_p_above_d_minus_one():
    with pytest.raises(ParameterError):
        verify.mz_experiment("alpha:1.75", 2, p=2.0, d=3)


def test_mz_is_reproducible():
    a = verify.mz_experiment("trig", 3, ensemble_size=4, seed=11, node_policy="random")
    b = verify.mz_experiment("trig", 3, ensemble_size=4, seed=11, node_policy="random")
    assert a.to_json() == b.to_json()


# --- Bernstein and Markov ratios ---


def test_bernstein_ratio_examples():
    dom = model_domain("alpha:1.5")
    R, flag = verify.bernstein_ratio(MultiPoly.constant(dom.bounding_box("G*"), 3.0), dom, 4)
    assert R == 0.0 and not flag
    flat = GraphDomain(polynomial_graph([0.0]))
    y = MultiPoly.linear(flat.bounding_box("G*"), 0.0, [0.0, 1.0])
    assert verify.bernstein_ratio(y, flat, 4, alpha=1.5)[0] == pytest.approx(0.0, abs=1e-14)


def test_bernstein_ratio_scale_invariant():
    dom = model_domain("trig")
    ens = random_ensemble(2, 3, 2, 0, dom.bounding_box("G*"))
    a, _ = verify.bernstein_ratio(ens, dom, 3)
    b, _ = verify.bernstein_ratio(ens.scaled(7.0), dom, 3)
    assert np.allclose(a, b, rtol=1e-12)


def test_markov_ratio_constant_is_zero():
    dom = model_domain("alpha:1.5")
    R, flag, frac = verify.markov_ratio(MultiPoly.constant(dom.bounding_box("G*"), 2.0), dom, 4)
    assert R == 0.0 and not flag and frac == 0.0


def test_markov_rejects_small_mu():
    with pytest.raises(ParameterError):
        verify.markov_experiment("alpha:1.5", [2, 4], mu=1.0)


# --- Lemma on the one-dimensional discretisation ---


@pytest.mark.parametrize("m", [1, 4, 16])
def test_lemma73_constant_closed_form(m):
    one = np.polynomial.Polynomial([1.0])
    r = verify.lemma73_discretization_check(one, m, 0.0, 1.0)
    # sqrt(x_j) = j / (2m), so LHS = (1/m) sum_j (j/(2m) + 1/m)
    expected = sum(j / (2 * m) + 1 / m for j in range(1, m + 1)) / m
    assert r["lhs"] == pytest.approx(expected, rel=1e-13)
    assert r["rhs"] == pytest.approx(1.0, rel=1e-14)


def test_lemma73_zero_and_chebyshev():
    zero = np.polynomial.Polynomial([0.0])
    r = verify.lemma73_discretization_check(zero, 8, 0.0, 2.0)
    assert r["lhs"] == 0.0 and r["rhs"] == 0.0 and r["ratio"] == 0.0
    r = verify.lemma73_discretization_check(np.polynomial.Chebyshev.basis(16), 32, 1.0, 2.0, n=16)
    assert math.isfinite(r["ratio"]) and r["ratio"] > 0
    assert r["lhs"] <= r["lhs_upper"]


def test_lemma73_forms_agree_at_beta_zero():
    f = np.polynomial.Chebyshev.basis(5, domain=[0, 1])
    a = verify.lemma73_discretization_check(f, 10, 0.0, 2.0)
    b = verify.lemma73_discretization_check(f, 10, 0.0, 2.0, form="corrected")
    assert a["lhs"] == pytest.approx(b["lhs"], rel=1e-14)


def test_lemma73_literal_form_grows_for_large_beta():
    # f = (1 - x)^n with m = n: ratio^p ~ n^(beta - 1/2) for the literal weights
    peak = lambda n: np.polynomial.Chebyshev([0.5, -0.5], domain=[0, 1]) ** n
    ratios = [verify.lemma73_discretization_check(peak(n), n, 2.0, 1.0)["ratio"] for n in (4, 16, 64)]
    assert verify.slope_fit([4, 16, 64], ratios)["slope"] > 1.0
    corrected = [verify.lemma73_discretization_check(peak(n), n, 2.0, 1.0, form="corrected")["ratio"] for n in (4, 16, 64)]
    assert verify.slope_fit([4, 16, 64], corrected)["slope"] <= 0.1


def test_lemma73_family_small():
    rep = verify.lemma73_family_check(n_list=(1, 2, 4, 8), ps=(2.0,), m_factors=(1, 2))
    assert rep.verdict
    with pytest.raises(ParameterError):
        verify.lemma73_discretization_check(np.polynomial.Polynomial([1.0]), 2, 0.0, 1.0, n=4)


# --- oscillation ---


def test_oscillation_of_constants_is_zero():
    dom = model_domain("alpha:1.5")
    f = MultiPoly(2, 0, dom.bounding_box("G*"), np.array([[1.0, 4.0]]))
    assert np.all(verify.oscillation_values(dom, f, 4, 2.0, [0.5, 0.25]) == 0.0)


def test_oscillation_nonincreasing_under_refinement():
    dom = model_domain("alpha:1.5")
    ens = random_ensemble(2, 4, 5, 2, dom.bounding_box("G*"))
    vals = verify.oscillation_values(dom, ens, 4, 2.0, [0.5, 0.25, 0.125])
    assert np.all(np.diff(vals, axis=0) <= 1e-12)


def test_oscillation_check_small():
    rep = verify.cell_oscillation_check("alpha:1.5", n=4, epsilon=0.5, ensemble_size=5)
    assert rep.verdict and rep.summary["max_lhs_over_rhs"] < 1


# --- smaller experiments ---


def test_sanity_reports_chebyshev_example():
    rep = verify.classical_sanity_suite(n_max=6, ball_count=5)
    assert rep.verdict
    assert rep.summary["chebyshev_T4_max_derivative"] == pytest.approx(16.0, abs=1e-10)


def test_jacobi_identity_small():
    rep = verify.jacobi_identity_check(n_max=10, betas=(1.0,))
    assert rep.verdict and rep.summary["max_rel_err"] < 1e-9


def test_steklov_experiment_single():
    rep = verify.steklov_experiment(alphas=(1.5,))
    assert rep.verdict


def test_phi_and_sandwich_small():
    assert verify.phi_experiment(models=("quad",), grid=20, n_points=100).verdict
    assert verify.sandwich_experiment(models=("alpha:1.5",), n_points=100, samples=4001).verdict


def test_cardinality_experiment_fits():
    rep = verify.cardinality_experiment()
    assert rep.verdict
    assert rep.summary["fits"]["d=2,alpha=2.0"]["slope"] == pytest.approx(2.0, abs=1e-12)


def test_sharpness_rejects_small_p():
    with pytest.raises(ParameterError):
        verify.sharpness_experiment(1.5, [4, 8], p=0.5)


def test_sharpness_scale_invariance_small():
    rep = verify.sharpness_experiment(1.5, [4, 8], b=1, a=0.5)
    assert rep.summary["scale_invariance_dev"] <= verify.SCALE_TOL
    assert all(r["ratio"] > 0 for r in rep.records)
