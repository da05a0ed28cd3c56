import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mzmesh.domain import (
    AlphaGraphFunction,
    Box,
    GraphDomain,
    PhiGadget,
    alpha_function,
    boundary_cap_max,
    brute_force_distance,
    delta_n,
    dist_to_essential_boundary,
    hoelder_check,
    injectivity_probe,
    lalpha_ball,
    model_domain,
    phi_forward,
    phi_inverse_plus,
    polynomial_graph,
    rolling_ball_check,
    sandwich_constant,
    sharpness_domain,
    steklov_transform,
    tangent_frame,
    tangential_gradient,
)
from mzmesh.errors import ConvergenceError, DomainMembershipError, GeometryError, ParameterError
from mzmesh.poly import MultiPoly


@pytest.fixture
def flat():
    return GraphDomain(polynomial_graph([0.0]))


@pytest.fixture
def parabola():
    return GraphDomain(polynomial_graph([0.0, 0.0, 1.0]))


def linear(dom, grad, const=0.0):
    return MultiPoly.linear(dom.bounding_box("G*"), const, grad)


# --- boxes and graph functions ---


def test_box_basics():
    b = Box.cube(0.0, 2.0, 2)
    assert b.dim == 2 and b.volume == 4.0
    assert b.contains([1.0, 2.0]) and not b.contains([2.1, 0.0])
    with pytest.raises(GeometryError):
        Box((1.0,), (0.0,))


def test_alpha_outside_range_rejected():
    with pytest.raises(ParameterError):
        alpha_function(2.5)


@pytest.mark.parametrize("model", ["quad", "alpha:1.25", "alpha:1.5", "alpha:1.75", "trig"])
@pytest.mark.parametrize("d", [2, 3])
def test_hoelder_constant_holds(model, d):
    dom = model_domain(model, d)
    # pairs as close as 1e-6 lose ~1e-8 to cancellation in |x - y|
    assert hoelder_check(dom.g, 4000) <= 1.0 + 1e-6
    assert dom.g.hoelder_L >= 1.0 or model == "trig"


def test_unknown_model_rejected():
    with pytest.raises(ParameterError):
        model_domain("cube")


def test_bounding_box_covers_apex_in_3d():
    dom = model_domain("alpha:1.75", 3)
    bb = dom.bounding_box("G")
    assert bb.hi[-1] >= 1.0
    pts = dom.sample(2000, "G", seed=1)
    assert np.all(bb.contains(pts))


# --- delta_n ---


def test_delta_n_examples(flat, parabola):
    # depth 1/4 plus 1/n^2 = 1/4
    assert delta_n(flat, [0.5, -0.25], 2) == pytest.approx(0.5, abs=1e-15)
    assert delta_n(parabola, [0.5, 0.25], 10) == pytest.approx(0.01, abs=1e-15)
    assert delta_n(parabola, [1.0, 0.0], 1) == pytest.approx(2.0, abs=1e-15)


def test_delta_n_outside_raises(flat):
    with pytest.raises(DomainMembershipError):
        delta_n(flat, [0.5, 0.1], 2)


@given(x=st.floats(-1.0, 2.0), z=st.floats(0.0, 2.0), n=st.integers(1, 50))
def test_delta_n_is_depth_plus_offset(x, z, n):
    dom = model_domain("alpha:1.5")
    pt = dom.lift(np.array([x]), z)
    assert delta_n(dom, pt, n) == pytest.approx(z + 1.0 / n**2, abs=1e-12)


# --- tangent frames and tangential gradients ---


def test_tangent_frame_examples(parabola):
    assert np.allclose(tangent_frame(parabola, 0.5), [[1.0, 1.0]])
    g = AlphaGraphFunction(
        lambda x: x[..., 0] + 2 * x[..., 1],
        lambda x: np.broadcast_to([1.0, 2.0], x.shape).copy(),
        2.0,
        1.0,
        Box.cube(-4, 4, 2),
    )
    assert np.allclose(tangent_frame(GraphDomain(g), [0.5, 0.5]), [[1, 0, 1], [0, 1, 2]])
    flat3 = model_domain("quad", 3)
    assert np.allclose(tangent_frame(flat3, [0.5, 0.5]), [[1, 0, 0], [0, 1, 0]])


def test_tangent_frame_outside_raises(parabola):
    with pytest.raises(DomainMembershipError):
        tangent_frame(parabola, 3.0)


def test_tangential_gradient_examples(flat):
    xi = [0.5, -0.1]
    assert tangential_gradient(linear(flat, [0, 1]), flat, [0.3], xi) == pytest.approx(0.0, abs=1e-14)
    assert tangential_gradient(linear(flat, [1, 0]), flat, [0.3], xi) == pytest.approx(1.0, abs=1e-14)
    g = polynomial_graph([0.0, 1.0])
    dom = GraphDomain(g)
    assert tangential_gradient(linear(dom, [1, 1]), dom, [0.5], [0.5, 0.4]) == pytest.approx(math.sqrt(2), abs=1e-14)


@settings(max_examples=50)
@given(
    gx=st.floats(-3, 3),
    gy=st.floats(-3, 3),
    u=st.floats(-1.0, 2.0),
)
def test_tangential_gradient_bounded_by_full_gradient(gx, gy, u):
    dom = model_domain("trig")
    f = linear(dom, [gx, gy])
    val = tangential_gradient(f, dom, [u], dom.lift(np.array([0.5]), 0.1))
    assert val <= math.hypot(gx, gy) * (1 + 1e-12) + 1e-14


# --- cap maxima ---


def test_cap_max_constant_and_flat(flat):
    xi = np.array([[0.5, -0.1], [0.2, -0.2]])
    assert np.all(boundary_cap_max(linear(flat, [0, 0], 3.0), flat, xi, 4, 2.0) == 0.0)
    assert np.allclose(boundary_cap_max(linear(flat, [1, 0]), flat, xi, 4, 2.0), 1.0)


def test_cap_max_parabola_against_closed_form(parabola):
    # cap radius 2 (sqrt(0.01) + 1/10)^(2/2) = 0.4; its edge u solves
    # u^2 + (u^2 + 0.01)^2 = 0.16 and the max of |g'|/sqrt(1 + g'^2) sits there
    s = (-1.02 + math.sqrt(1.02**2 + 4 * 0.1599)) / 2
    expected = 2 * math.sqrt(s) / math.sqrt(1 + 4 * s)
    assert expected == pytest.approx(0.596483836882426, rel=1e-6)  # brute-force scan, step 1e-7
    got = boundary_cap_max(linear(parabola, [0, 1]), parabola, [0.0, -0.01], 10, 2.0)
    assert got == pytest.approx(expected, rel=1e-5)


def test_cap_max_requires_mu_above_one(flat):
    with pytest.raises(ParameterError):
        boundary_cap_max(linear(flat, [1, 0]), flat, [0.5, -0.1], 4, 1.0)


# --- distance to the essential boundary ---


def test_distance_examples(flat, parabola):
    assert dist_to_essential_boundary(flat, [0.5, -0.1])[0] == pytest.approx(0.1, abs=1e-12)
    assert dist_to_essential_boundary(parabola, [0.0, -0.5])[0] == pytest.approx(0.5, abs=1e-10)
    assert dist_to_essential_boundary(parabola, [0.7, 0.49])[0] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("model", ["quad", "alpha:1.25", "trig"])
def test_distance_matches_brute_force(model):
    dom = model_domain(model)
    pts = dom.sample(200, "G", seed=3)
    fast = dist_to_essential_boundary(dom, pts)
    slow = brute_force_distance(dom, pts, 200_001)
    assert np.all(fast <= slow + 1e-9)
    assert np.allclose(fast, slow, atol=1e-6)


@pytest.mark.parametrize("model", ["quad", "alpha:1.5", "trig"])
def test_sandwich(model):
    dom = model_domain(model)
    pts = dom.sample(300, "G", seed=4)
    dist = dist_to_essential_boundary(dom, pts)
    depth = dom.depth(pts)
    c = sandwich_constant(dom)
    assert np.all(dist <= depth + 1e-12)
    assert np.all(dist >= c * depth - 1e-12)


# --- Steklov smoothing ---


def test_steklov_linear_exact():
    g = polynomial_graph([0.3, -1.2])
    gs = steklov_transform(g, 0.1)
    x = np.linspace(-1, 2, 31)[:, None]
    assert np.allclose(gs(x), g(x), atol=1e-13)
    assert np.allclose(gs.grad(x), g.grad(x), atol=1e-13)


@pytest.mark.parametrize("delta", [0.2, 0.05, 0.01])
def test_steklov_square(delta):
    gs = steklov_transform(polynomial_graph([0, 0, 1]), delta)
    x = np.linspace(-1, 2, 17)[:, None]
    assert np.allclose(gs(x), x[:, 0] ** 2 + 2 * delta**2 / 3, atol=1e-13)
    assert np.allclose(gs.second_deriv(x)[..., 0, 0], 2.0, atol=1e-10)


@pytest.mark.parametrize("delta", [0.1, 0.01, 0.001])
def test_steklov_abs(delta):
    gs = steklov_transform(alpha_function(1.0), delta)
    # g = 1 - |x|, E|u + v| = 2 delta / 3 for u, v uniform on [-delta, delta]
    assert gs(np.array([0.0])) == pytest.approx(1 - 2 * delta / 3, abs=1e-12)


def test_steklov_delta_too_large():
    with pytest.raises(GeometryError):
        steklov_transform(polynomial_graph([0, 1]), 5.0)


# --- the Phi gadget ---


def test_phi_examples():
    gad = PhiGadget(polynomial_graph([0.0]))
    assert gad.M == 18.0 and gad.A == 49.5
    x, y, jac = phi_forward(gad, 0.0, 0.1)
    assert (x, y) == pytest.approx((0.1, -0.2475), abs=1e-15)
    assert jac == pytest.approx(4.95, abs=1e-13)
    x, y, jac = phi_forward(gad, 0.3, 0.0)
    assert (x, y, jac) == (0.3, 0.0, 0.0)


def test_phi_rejects_points_outside_E():
    gad = PhiGadget(polynomial_graph([0.0]))
    with pytest.raises(DomainMembershipError):
        phi_forward(gad, 0.0, 1.0)


def test_phi_needs_c2_and_valid_A():
    with pytest.raises(ParameterError):
        PhiGadget(alpha_function(1.5))
    with pytest.raises(ParameterError):
        PhiGadget(polynomial_graph([0.0]), A=10.0)


@settings(max_examples=60)
@given(x=st.floats(0.0, 1.0), z=st.floats(0.0, 1.0))
def test_phi_inverse_round_trip(x, z):
    gad = PhiGadget(model_domain("trig").g)
    y = float(gad.g(np.array([x]))) - z
    zz, tt = phi_inverse_plus(gad, np.array([x]), np.array([y]))
    xb, yb, _ = phi_forward(gad, zz, tt)
    assert abs(xb[0] - x) <= 1e-10 and abs(yb[0] - y) <= 1e-10
    assert 0.0 <= tt[0] <= gad.r1


def test_phi_inverse_on_graph():
    gad = PhiGadget(polynomial_graph([0, 0, 0.5]))
    z, t = phi_inverse_plus(gad, np.array([0.4]), np.array([0.08]))
    # h(t) ~ t^2 near 0, so a rounding-level target leaves t ~ 1e-9
    assert abs(t[0]) <= 1e-8 and z[0] == pytest.approx(0.4, abs=1e-8)


def test_phi_inverse_convergence_error():
    gad = PhiGadget(polynomial_graph([0.0]))
    with pytest.raises(ConvergenceError):
        phi_inverse_plus(gad, np.array([0.5]), np.array([-0.5]), max_iter=3)


def test_injectivity_probe_clean():
    assert injectivity_probe(PhiGadget(model_domain("quad").g), n_pairs=300) == 0


# --- general domains and the sharpness geometry ---


@pytest.mark.parametrize("alpha", [1.5, 2.0])
def test_lalpha_ball_rolling_condition(alpha):
    inside, outside = rolling_ball_check(lalpha_ball(alpha), n_boundary=60, n_samples=60)
    assert inside == 0 and outside == 0


def test_sharpness_domain_apex_on_boundary():
    dom = sharpness_domain(1.5)
    apex = np.array([[0.0, 1.0]])
    assert dom.depth(apex)[0] == 0.0
    assert dom.contains(apex, "G")[0]
