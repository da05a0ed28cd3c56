"""C^alpha graph functions, graph domains and their boundary geometry.

Base points x live in R^(d-1) and are passed as arrays with a trailing axis
of length d-1; points of R^d carry a trailing axis of length d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DomainMembershipError, GeometryError, ParameterError
from .integrate import graded_rule

__all__ = [
    "Box",
    "AlphaGraphFunction",
    "GraphDomain",
    "GeneralCAlphaDomain",
    "PhiGadget",
    "quad_function",
    "alpha_function",
    "trig_function",
    "polynomial_graph",
    "model_function",
    "model_domain",
    "sharpness_domain",
    "lalpha_ball",
    "hoelder_check",
    "delta_n",
    "tangent_frame",
    "tangential_gradient",
    "boundary_cap_max",
    "cap_max_from_gradients",
    "dist_to_essential_boundary",
    "brute_force_distance",
    "sandwich_constant",
    "steklov_transform",
    "steklov_delta_for",
    "phi_forward",
    "phi_inverse_plus",
    "injectivity_probe",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] in R^k."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or any(h <= l for l, h in zip(lo, hi)):
            raise GeometryError(f"degenerate box {lo} x {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo, hi, k):
        return cls((lo,) * k, (hi,) * k)

    @property
    def dim(self):
        return len(self.lo)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return np.all((x >= np.asarray(self.lo) - tol) & (x <= np.asarray(self.hi) + tol), axis=-1)

    def strictly_inside(self, other: "Box"):
        return all(a < b for a, b in zip(other.lo, self.lo)) and all(
            a > b for a, b in zip(other.hi, self.hi)
        )

    def shrink(self, amount):
        return Box(tuple(v + amount for v in self.lo), tuple(v - amount for v in self.hi))

    def grid(self, per_axis):
        axes = [np.linspace(l, h, per_axis) for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True, eq=False)
class AlphaGraphFunction:
    """A boundary function g with gradient Hoelder-(alpha-1) constant ``hoelder_L``.

    ``second_deriv`` (Hessian, shape (..., k, k)) and ``M_cert`` are present
    only for C^2-certified functions.  ``kinks`` lists, per axis, coordinates
    where the gradient is not smooth; quadratures grade toward them.
    """

    evaluate: Callable
    gradient: Callable
    alpha: float
    hoelder_L: float
    base_box: Box
    second_deriv: Callable | None = None
    M_cert: float | None = None
    kinks: tuple = ()
    name: str = "g"

    def __post_init__(self):
        if not 1.0 <= self.alpha <= 2.0:
            raise ParameterError("alpha must lie in [1, 2]")
        if not self.hoelder_L > 0:
            raise ParameterError("Hoelder constant must be positive")

    @property
    def base_dim(self):
        return self.base_box.dim

    @property
    def is_c2(self):
        return self.second_deriv is not None

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))

    def grad(self, x):
        return self.gradient(np.asarray(x, dtype=float))


def _kinks(center, k):
    return tuple((float(center),) for _ in range(k))


def quad_function(d=2, center=0.0, box=(-4.0, 4.0)):
    """g(x) = 1 - |x - c|^2 / 2 (C^2, L = 1)."""
    k = d - 1

    def ev(x):
        return 1.0 - 0.5 * np.sum((x - center) ** 2, axis=-1)

    def gr(x):
        return -(x - center)

    def hess(x):
        return np.broadcast_to(-np.eye(k), x.shape + (k,)).copy()

    return AlphaGraphFunction(
        ev, gr, 2.0, 1.0, Box.cube(*box, k), hess, 1.0 + 18.0, (), "quad"
    )


def alpha_function(alpha, d=2, center=0.0, box=(-4.0, 4.0)):
    """g(x) = 1 - sum |x_i - c|^alpha, exactly C^alpha at x = c."""
    alpha = float(alpha)
    if not 1.0 <= alpha <= 2.0:
        raise ParameterError("alpha must lie in [1, 2]")
    k = d - 1

    def ev(x):
        return 1.0 - np.sum(np.abs(x - center) ** alpha, axis=-1)

    def gr(x):
        s = x - center
        return -alpha * np.sign(s) * np.abs(s) ** (alpha - 1.0)

    hess = None
    m_cert = None
    if alpha == 2.0:

        def hess(x):
            return np.broadcast_to(-2.0 * np.eye(k), x.shape + (k,)).copy()

        m_cert = 2.0 + 18.0
    L = alpha * 2.0 ** (2.0 - alpha) * k ** ((2.0 - alpha) / 2.0)
    kinks = _kinks(center, k) if alpha < 2.0 else ()
    return AlphaGraphFunction(
        ev, gr, alpha, L, Box.cube(*box, k), hess, m_cert, kinks, f"alpha:{alpha:g}"
    )


def trig_function(d=2, center=0.0, box=(-4.0, 4.0), amp=0.2):
    """g(x) = 1 + amp * sum cos(pi (x_i - c)), C^infinity."""
    k = d - 1
    w = math.pi

    def ev(x):
        return 1.0 + amp * np.sum(np.cos(w * (x - center)), axis=-1)

    def gr(x):
        return -amp * w * np.sin(w * (x - center))

    def hess(x):
        diag = -amp * w**2 * np.cos(w * (x - center))
        out = np.zeros(x.shape + (k,))
        idx = np.arange(k)
        out[..., idx, idx] = diag
        return out

    L = amp * w**2
    return AlphaGraphFunction(
        ev, gr, 2.0, L, Box.cube(*box, k), hess, L + 18.0, (), "trig"
    )


def polynomial_graph(coeffs, box=(-4.0, 4.0), name=None):
    """A univariate polynomial boundary g (power-basis ``coeffs``), C^2-certified."""
    P = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    dP, d2P = P.deriv(1), P.deriv(2)
    xs = np.linspace(box[0], box[1], 4001)
    sup2 = float(np.max(np.abs(d2P(xs)))) if P.degree() >= 2 else 0.0

    def ev(x):
        return P(x[..., 0])

    def gr(x):
        return dP(x[..., 0])[..., None]

    def hess(x):
        return d2P(x[..., 0])[..., None, None]

    return AlphaGraphFunction(
        ev,
        gr,
        2.0,
        max(sup2, 1.0),
        Box.cube(*box, 1),
        hess,
        sup2 + 18.0,
        (),
        name or f"poly{list(np.round(P.coef, 6))}",
    )


def model_function(model_id: str, d=2, center=0.0):
    """Build a model boundary function from its string id ("quad", "alpha:1.5", "trig")."""
    kind, _, arg = model_id.partition(":")
    if kind == "quad":
        return quad_function(d, center)
    if kind == "trig":
        return trig_function(d, center)
    if kind == "alpha":
        if not arg:
            raise ParameterError("alpha model needs an exponent, e.g. 'alpha:1.5'")
        return alpha_function(float(arg), d, center)
    raise ParameterError(f"unknown model domain id {model_id!r}")


@dataclass(frozen=True, eq=False)
class GraphDomain:
    """The region G below the graph of g over ``inner_box`` and its enlargement G*.

    G = {x in D1, g(x) - depth_G <= y <= g(x)} and likewise G* over D2 with
    depth_Gstar.  The graph of g over D2 is the essential boundary Gamma'.
    """

    g: AlphaGraphFunction
    inner_box: Box | None = None
    outer_box: Box | None = None
    depth_G: float = 0.25
    depth_Gstar: float = 2.0

    def __post_init__(self):
        k = self.g.base_dim
        if self.inner_box is None:
            object.__setattr__(self, "inner_box", Box.cube(0.0, 1.0, k))
        if self.outer_box is None:
            object.__setattr__(self, "outer_box", Box.cube(-1.0, 2.0, k))
        if self.inner_box.dim != k or self.outer_box.dim != k:
            raise GeometryError("box dimension does not match g")
        if not self.inner_box.strictly_inside(self.outer_box):
            raise GeometryError("inner box must lie strictly inside the outer box")
        if not self.outer_box.strictly_inside(self.g.base_box) and self.outer_box != self.g.base_box:
            if not all(a >= b for a, b in zip(self.outer_box.lo, self.g.base_box.lo)) or not all(
                a <= b for a, b in zip(self.outer_box.hi, self.g.base_box.hi)
            ):
                raise GeometryError("outer box exceeds the base box of g")
        if not 0 < self.depth_G < self.depth_Gstar:
            raise GeometryError("need 0 < depth_G < depth_Gstar")

    @property
    def dim(self):
        return self.g.base_dim + 1

    def region(self, region="G"):
        if region == "G":
            return self.inner_box, self.depth_G
        if region in ("G*", "Gstar", "G_*"):
            return self.outer_box, self.depth_Gstar
        raise ParameterError(f"unknown region {region!r}")

    def depth(self, points):
        """g(x) - y for points (..., d)."""
        pts = np.asarray(points, dtype=float)
        return self.g(pts[..., :-1]) - pts[..., -1]

    def contains(self, points, region="G", tol=1e-12):
        pts = np.asarray(points, dtype=float)
        box, depth = self.region(region)
        z = self.depth(pts)
        return box.contains(pts[..., :-1], tol) & (z >= -tol) & (z <= depth + tol)

    def lift(self, x, z):
        """Point (x, g(x) - z) from base point and depth."""
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, (self.g(x) - z)[..., None]], axis=-1)

    def bounding_box(self, region="G", samples=257):
        """Axis box containing the region.

        g is sampled on a grid that includes its kinks, and the extreme grid
        values are polished by bounded local optimisation.
        """
        box, depth = self.region(region)
        k = box.dim
        per_axis = samples if k == 1 else max(17, int(round(samples ** (1.0 / k))) * 4)
        axes = []
        for i in range(k):
            ax = np.linspace(box.lo[i], box.hi[i], per_axis)
            ks = self.g.kinks[i] if i < len(self.g.kinks) else ()
            axes.append(np.union1d(ax, [c for c in ks if box.lo[i] <= c <= box.hi[i]]))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        gv = self.g(pts)
        bounds = list(zip(box.lo, box.hi))
        top, bot = float(gv.max()), float(gv.min())
        for sign, start in ((-1.0, pts[np.argmax(gv)]), (1.0, pts[np.argmin(gv)])):
            res = optimize.minimize(
                lambda u: sign * float(self.g(u)),
                start,
                jac=lambda u: sign * self.g.grad(u),
                method="L-BFGS-B",
                bounds=bounds,
            )
            val = float(self.g(res.x))
            top, bot = max(top, val), min(bot, val)
        bot -= depth
        pad = 1e-9 * max(1.0, top - bot)
        return Box(box.lo + (bot - pad,), box.hi + (top + pad,))

    def sample(self, count, region="G", seed=0):
        """Uniform samples in flattened coordinates (x uniform, depth uniform)."""
        rng = np.random.default_rng(seed)
        box, depth = self.region(region)
        x = rng.uniform(box.lo, box.hi, size=(count, box.dim))
        z = rng.uniform(0.0, depth, size=count)
        return self.lift(x, z)


def model_domain(model_id: str, d=2, depth_G=0.25, depth_Gstar=2.0, inner_box=None, outer_box=None):
    """Graph domain over [0,1]^(d-1) whose model function is centred at 1/2."""
    g = model_function(model_id, d, center=0.5)
    return GraphDomain(g, inner_box, outer_box, depth_G, depth_Gstar)


def sharpness_domain(alpha, d=2, half_width=0.5, depth=0.5):
    """Domain with the exactly C^alpha point e_d = (0,...,0,1) on its boundary.

    D = {|x_i| <= half_width, g(x) - depth <= y <= g(x)} with
    g(x) = 1 - sum |x_i|^alpha.
    """
    g = alpha_function(alpha, d, center=0.0)
    k = d - 1
    inner = Box.cube(-half_width, half_width, k)
    outer = Box.cube(-2 * half_width, 2 * half_width, k)
    return GraphDomain(g, inner, outer, depth, 2 * depth)


def hoelder_check(g: AlphaGraphFunction, n_pairs=10_000, seed=0):
    """Largest observed |grad g(x+t) - grad g(x)| / (L |t|^(alpha-1)) over random pairs."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(g.base_box.lo), np.asarray(g.base_box.hi)
    k = g.base_dim
    x = rng.uniform(lo, hi, size=(n_pairs, k))
    y = rng.uniform(lo, hi, size=(n_pairs, k))
    # Half the pairs are close together so that small |t| is exercised.
    close = np.arange(n_pairs) % 2 == 0
    scale = 10.0 ** rng.uniform(-6, 0, size=(n_pairs, 1))
    y[close] = np.clip(x[close] + scale[close] * rng.standard_normal((close.sum(), k)), lo, hi)
    t = np.linalg.norm(y - x, axis=-1)
    ok = t > 0
    dg = np.linalg.norm(g.grad(y) - g.grad(x), axis=-1)
    ratio = dg[ok] / (g.hoelder_L * t[ok] ** (g.alpha - 1.0))
    return float(ratio.max())


def delta_n(domain: GraphDomain, point, n):
    """Regularised boundary distance g(x) - y + 1/n^2 for points of G*."""
    pts = np.asarray(point, dtype=float)
    if n < 1:
        raise ParameterError("n must be a positive integer")
    if not np.all(domain.contains(pts, "G*")):
        raise DomainMembershipError("delta_n needs points of G*")
    return domain.depth(pts) + 1.0 / n**2


def tangent_frame(domain: GraphDomain, x):
    """Tangent vectors e_j + d_j g(x) e_d, j = 1..d-1, as rows of a (d-1, d) array."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not domain.outer_box.contains(x):
        raise DomainMembershipError("tangent_frame needs a base point of D2")
    k = domain.g.base_dim
    grad = domain.g.grad(x)
    frame = np.zeros((k, k + 1))
    frame[:, :k] = np.eye(k)
    frame[:, k] = grad
    return frame


def _unit_normals(g, u):
    gu = g.grad(u)
    nu = np.concatenate([gu, -np.ones(gu.shape[:-1] + (1,))], axis=-1)
    return nu / np.linalg.norm(nu, axis=-1, keepdims=True)


def _tangential_norm(grad, normal):
    dot = np.sum(grad * normal, axis=-1, keepdims=True)
    return np.linalg.norm(grad - dot * normal, axis=-1)


def tangential_gradient(f, domain: GraphDomain, u, xi):
    """max over unit tangent directions eta at (u, g(u)) of |d_eta f(xi)|.

    Equal to the length of the projection of grad f(xi) onto the tangent
    hyperplane at u.  ``f`` must provide ``eval_grad(points)``.
    """
    xi = np.asarray(xi, dtype=float)
    u = np.asarray(u, dtype=float)
    if not np.all(domain.contains(xi, "G")):
        raise DomainMembershipError("xi must lie in G")
    if not np.all(domain.outer_box.contains(u)):
        raise DomainMembershipError("u must lie in the base of the essential boundary")
    _, grad = f.eval_grad(np.atleast_2d(xi))
    out = _tangential_norm(grad, _unit_normals(domain.g, np.atleast_2d(u)))
    return out if xi.ndim > 1 else float(out[0])


def _golden_refine(obj, u, lo, hi, sweeps, iters=60):
    """Cyclic coordinate golden-section search from u inside per-point brackets."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    u = u.copy()
    for _ in range(sweeps):
        for i in range(u.shape[-1]):
            a, b = lo[:, i].copy(), hi[:, i].copy()

            def at(t):
                v = u.copy()
                v[:, i] = t
                return obj(v)

            for _ in range(iters):
                c = b - invphi * (b - a)
                e = a + invphi * (b - a)
                left = at(c) < at(e)
                b = np.where(left, e, b)
                a = np.where(left, a, c)
            cand = 0.5 * (a + b)
            better = at(cand) <= obj(u)
            u[better, i] = cand[better]
    return u


def dist_to_essential_boundary(domain: GraphDomain, xi, coarse=256, return_foot=False, chunk_elems=4_000_000):
    """Euclidean distance from points of G to Gamma' = {(u, g(u)): u in D2}.

    A coarse grid of ``coarse`` samples per axis locates the nearest boundary
    point; coordinate golden-section search polishes it within one grid cell.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    g = domain.g
    box = domain.outer_box
    k = g.base_dim
    grid = box.grid(coarse)
    gvals = g(grid)
    step = (np.asarray(box.hi) - np.asarray(box.lo)) / (coarse - 1)
    best_u = np.empty((len(xi), k))
    per = max(1, chunk_elems // len(grid))
    for s in range(0, len(xi), per):
        q = xi[s : s + per]
        d2 = np.sum((grid[None, :, :] - q[:, None, :-1]) ** 2, axis=-1) + (gvals[None, :] - q[:, None, -1]) ** 2
        best_u[s : s + per] = grid[np.argmin(d2, axis=1)]

    def obj_for(q):
        def obj(u):
            return np.sum((u - q[:, :-1]) ** 2, axis=-1) + (g(u) - q[:, -1]) ** 2

        return obj

    lo = np.maximum(best_u - step, box.lo)
    hi = np.minimum(best_u + step, box.hi)
    obj = obj_for(xi)
    foot = _golden_refine(obj, best_u, lo, hi, sweeps=1 if k == 1 else 3)
    dist = np.sqrt(np.maximum(obj(foot), 0.0))
    if return_foot:
        return dist, foot
    return dist


def brute_force_distance(domain: GraphDomain, xi, samples=20001):
    """Reference distance to Gamma' by exhaustive sampling (no refinement)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    box = domain.outer_box
    per_axis = samples if box.dim == 1 else int(round(samples ** (1.0 / box.dim)))
    grid = box.grid(per_axis)
    gv = domain.g(grid)
    out = np.empty(len(xi))
    per = max(1, 4_000_000 // len(grid))
    for s in range(0, len(xi), per):
        q = xi[s : s + per]
        d2 = np.sum((grid[None] - q[:, None, :-1]) ** 2, axis=-1) + (gv[None] - q[:, None, -1]) ** 2
        out[s : s + per] = np.sqrt(d2.min(axis=1))
    # the point straight above xi is always a candidate
    above = box.contains(xi[:, :-1])
    vert = np.abs(domain.g(xi[:, :-1]) - xi[:, -1])
    out[above] = np.minimum(out[above], vert[above])
    return out


def sandwich_constant(domain: GraphDomain, samples=401):
    """c_* = 1 / (3 sqrt(1 + max_{D2} |grad g|^2)), the max taken on a grid plus the box corners."""
    box = domain.outer_box
    per_axis = samples if box.dim == 1 else max(33, int(samples ** (2.0 / box.dim)))
    pts = box.grid(per_axis)
    gmax = float(np.max(np.linalg.norm(domain.g.grad(pts), axis=-1)))
    return 1.0 / (3.0 * math.sqrt(1.0 + gmax**2))


def cap_max_from_gradients(
    domain: GraphDomain,
    xi,
    grads,
    n,
    mu,
    alpha=None,
    density=32,
    rtol=1e-3,
    max_doublings=4,
    dist=None,
    foot=None,
    chunk_elems=2_000_000,
):
    """Largest tangential gradient over the boundary cap around each point.

    ``grads`` has shape (N, K, d): gradients of K functions at the N points.
    The cap is {(u, g(u)): |(u, g(u)) - xi| <= mu phi^(2/alpha)} with
    phi = sqrt(dist(xi, Gamma')) + 1/n.  The u-grid density doubles until the
    max moves by less than ``rtol`` (relative).  Returns (values (N, K),
    converged (N,)).
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    grads = np.asarray(grads, dtype=float)
    if grads.ndim == 2:
        grads = grads[:, None, :]
    if not mu > 1:
        raise ParameterError("mu must exceed 1")
    alpha = domain.g.alpha if alpha is None else float(alpha)
    if dist is None or foot is None:
        dist, foot = dist_to_essential_boundary(domain, xi, return_foot=True)
    radius = mu * (np.sqrt(dist) + 1.0 / n) ** (2.0 / alpha)
    box = domain.outer_box
    lo_b, hi_b = np.asarray(box.lo), np.asarray(box.hi)
    k = domain.g.base_dim
    N, K, _ = grads.shape

    def scan_box(idx, dens):
        out = np.empty((len(idx), K))
        M = dens**k + 1
        per = max(1, chunk_elems // (M * max(K, 1)))
        ref = np.linspace(0.0, 1.0, dens)
        mesh = np.stack([m.ravel() for m in np.meshgrid(*([ref] * k), indexing="ij")], axis=-1)
        for s in range(0, len(idx), per):
            sel = idx[s : s + per]
            q, r = xi[sel], radius[sel]
            lo = np.maximum(q[:, :-1] - r[:, None], lo_b)
            hi = np.minimum(q[:, :-1] + r[:, None], hi_b)
            u = lo[:, None, :] + (hi - lo)[:, None, :] * mesh[None, :, :]
            u = np.concatenate([u, foot[sel][:, None, :]], axis=1)
            eta = np.concatenate([u, domain.g(u)[..., None]], axis=-1)
            inside = np.linalg.norm(eta - q[:, None, :], axis=-1) <= r[:, None]
            inside[:, -1] = True
            nu = _unit_normals(domain.g, u)
            gq = grads[sel]
            dots = np.einsum("nkd,nmd->nkm", gq, nu)
            sq = np.sum(gq**2, axis=-1)[:, :, None] - dots**2
            sq = np.where(inside[:, None, :], sq, -np.inf)
            out[s : s + per] = np.sqrt(np.maximum(sq.max(axis=-1), 0.0))
        return out

    if k == 1:
        # the cap is an interval around the foot; bracket its ends by bisection
        fu = foot[:, 0]

        def edge(direction):
            far = np.clip(xi[:, 0] + direction * radius, lo_b[0], hi_b[0])
            a, b = fu.copy(), far.copy()
            at_far = _cap_gap(domain, xi, far, radius) <= 0
            for _ in range(60):
                mid = 0.5 * (a + b)
                ok = _cap_gap(domain, xi, mid, radius) <= 0
                a = np.where(ok, mid, a)
                b = np.where(ok, b, mid)
            return np.where(at_far, far, a)

        ends_lo, ends_hi = edge(-1.0), edge(1.0)
        kinks = domain.g.kinks[0] if domain.g.kinks else ()

        def scan_interval(idx, dens):
            out = np.empty((len(idx), K))
            per = max(1, chunk_elems // ((dens + 1) * max(K, 1)))
            ref = np.linspace(0.0, 1.0, dens)
            for s in range(0, len(idx), per):
                sel = idx[s : s + per]
                u = ends_lo[sel, None] + (ends_hi - ends_lo)[sel, None] * ref[None, :]
                extra = [fu[sel, None]] + [
                    np.clip(c, ends_lo[sel], ends_hi[sel])[:, None] for c in kinks
                ]
                u = np.concatenate([u, *extra], axis=1)[..., None]
                nu = _unit_normals(domain.g, u)
                gq = grads[sel]
                dots = np.einsum("nkd,nmd->nkm", gq, nu)
                sq = np.sum(gq**2, axis=-1)[:, :, None] - dots**2
                out[s : s + per] = np.sqrt(np.maximum(sq.max(axis=-1), 0.0))
            return out

        scan = scan_interval
    else:
        scan = scan_box

    idx = np.arange(N)
    cur = scan(idx, density)
    converged = np.zeros(N, dtype=bool)
    dens = density
    for _ in range(max_doublings):
        dens *= 2
        nxt = scan(idx, dens)
        delta = np.abs(nxt - cur[idx]).max(axis=1)
        scale = np.maximum(np.abs(nxt).max(axis=1), 1e-300)
        done = delta <= rtol * scale
        cur[idx] = nxt
        converged[idx[done]] = True
        idx = idx[~done]
        if len(idx) == 0:
            break
    return cur, converged


def _cap_gap(domain, xi, u, radius):
    """|(u, g(u)) - xi| - radius for scalar base coordinates u."""
    gu = domain.g(u[:, None])
    return np.hypot(u - xi[:, 0], gu - xi[:, 1]) - radius


def boundary_cap_max(f, domain: GraphDomain, xi, n, mu, alpha=None, density=32, rtol=1e-3):
    """Max over the boundary cap of the tangential gradient of ``f`` at xi."""
    pts = np.atleast_2d(np.asarray(xi, dtype=float))
    if not np.all(domain.contains(pts, "G")):
        raise DomainMembershipError("xi must lie in G")
    _, grad = f.eval_grad(pts)
    vals, _ = cap_max_from_gradients(domain, pts, grad, n, mu, alpha, density, rtol)
    vals = vals[:, 0]
    return vals if np.ndim(xi) > 1 else float(vals[0])


# --- Steklov smoothing -------------------------------------------------------


def _scalar_views(g):
    def ev(x):
        return g(np.asarray(x, dtype=float)[..., None])

    def d1(x):
        return g.grad(np.asarray(x, dtype=float)[..., None])[..., 0]

    return ev, d1


def steklov_delta_for(b, L, alpha, c_tilde=1.0):
    """Smoothing radius with c_tilde L delta^alpha = b / 8."""
    return (b / (8.0 * c_tilde * L)) ** (1.0 / alpha)


def steklov_transform(g: AlphaGraphFunction, delta, order=16, levels=30):
    """Double moving average g_delta(x) = (4 delta^2)^-1 iint_[-delta,delta]^2 g(x+u+v).

    Written as a triangular-kernel average over s = u + v in [-2 delta, 2 delta];
    the derivative is the same average of g', and the second derivative the
    divided difference (4 delta^2)^-1 int [g'(x+u+delta) - g'(x+u-delta)] du.
    Each integral is a composite Gauss rule graded toward the kinks of g.
    """
    if g.base_dim != 1:
        raise GeometryError("Steklov smoothing is implemented for one-dimensional bases")
    delta = float(delta)
    lo, hi = g.base_box.lo[0] + 2 * delta, g.base_box.hi[0] - 2 * delta
    if not delta > 0 or not hi > lo:
        raise GeometryError("delta too large for the base box of g")
    ev, d1 = _scalar_views(g)
    kinks = g.kinks[0] if g.kinks else ()

    def kernel_avg(fn, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty_like(flat)
        for i, xv in enumerate(flat):
            toward = [0.0] + [c - xv for c in kinks if abs(c - xv) < 2 * delta]
            s, w = graded_rule(-2 * delta, 2 * delta, order, toward=toward, levels=levels)
            ker = (2 * delta - np.abs(s)) / (4 * delta**2)
            out[i] = np.dot(w, fn(xv + s) * ker)
        return out.reshape(x.shape)

    def second(x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty_like(flat)
        for i, xv in enumerate(flat):
            toward = [c - xv + sh for c in kinks for sh in (-delta, delta) if abs(c - xv + sh) < delta]
            s, w = graded_rule(-delta, delta, order, toward=toward, levels=levels)
            out[i] = np.dot(w, d1(xv + s + delta) - d1(xv + s - delta)) / (4 * delta**2)
        return out.reshape(x.shape)

    def evaluate(x):
        return kernel_avg(ev, np.asarray(x, dtype=float)[..., 0])

    def gradient(x):
        return kernel_avg(d1, np.asarray(x, dtype=float)[..., 0])[..., None]

    def hessian(x):
        return second(np.asarray(x, dtype=float)[..., 0])[..., None, None]

    samples = np.linspace(lo, hi, 129)
    near = [c + delta * t for c in kinks for t in np.linspace(-3, 3, 25) if lo <= c + delta * t <= hi]
    samples = np.concatenate([samples, np.asarray(near, dtype=float)])
    sup2 = float(np.max(np.abs(second(samples))))
    return AlphaGraphFunction(
        evaluate,
        gradient,
        2.0,
        max(sup2, 1.0),
        Box((lo,), (hi,)),
        hessian,
        sup2 + 18.0,
        (),
        f"steklov({g.name}, {delta:g})",
    )


# --- the change of variables (z, t) -> (z + t, Q_z(t)) -----------------------


@dataclass(frozen=True, eq=False)
class PhiGadget:
    """Parameters of the map Phi(z, t) = (z + t, g(z) + g'(z) t - A t^2 / 2).

    ``g`` must be C^2-certified on a base box containing [-1, 2]; A defaults
    to 11M/4 with M = sup|g''| + 18.
    """

    g: AlphaGraphFunction
    A: float | None = None
    M: float = field(init=False)
    r0: float = field(init=False)
    r1: float = field(init=False)

    def __post_init__(self):
        if not self.g.is_c2 or self.g.M_cert is None or self.g.base_dim != 1:
            raise ParameterError("Phi gadget needs a C^2-certified g with a 1D base")
        lo, hi = self.g.base_box.lo[0], self.g.base_box.hi[0]
        if lo > -1.0 or hi < 2.0:
            raise GeometryError("g must be defined on [-1, 2]")
        M = float(self.g.M_cert)
        A = 11.0 * M / 4.0 if self.A is None else float(self.A)
        if not 2.5 * M < A < 3.0 * M:
            raise ParameterError("A must lie strictly between 5M/2 and 3M")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "r0", math.sqrt(2.0 / M))
        object.__setattr__(self, "r1", 2.0 / math.sqrt(3.0 * M))

    def in_E(self, z, t, tol=1e-12):
        z, t = np.asarray(z, float), np.asarray(t, float)
        return (
            (z >= -1 - tol) & (z <= 2 + tol) & (z + t >= -1 - tol) & (z + t <= 2 + tol) & (np.abs(t) <= self.r0 + tol)
        )

    def Q(self, z, t):
        ev, d1 = _scalar_views(self.g)
        return ev(z) + d1(z) * t - 0.5 * self.A * t**2


def phi_forward(gadget: PhiGadget, z, t):
    """Return (x, y, |det J|) for parameters (z, t) in E."""
    z, t = np.asarray(z, dtype=float), np.asarray(t, dtype=float)
    if not np.all(gadget.in_E(z, t)):
        raise DomainMembershipError("(z, t) outside the parameter set E")
    g2 = gadget.g.second_deriv(z[..., None])[..., 0, 0]
    x = z + t
    y = gadget.Q(z, t)
    jac = (gadget.A + g2) * np.abs(t)
    return x, y, jac


def phi_inverse_plus(gadget: PhiGadget, x, y, tol=1e-10, max_iter=200):
    """The unique (z, t) with 0 <= t <= r1 and Phi(z, t) = (x, y), for (x, y) in G.

    G is the depth-one region over [0, 1].  Solves
    h(t) = g(x) - Q_{x-t}(t) = g(x) - y by bisection on [0, r1].
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    ev, _ = _scalar_views(gadget.g)
    gx = ev(x)
    target = gx - y
    if np.any((x < -1e-12) | (x > 1 + 1e-12) | (target < -1e-12) | (target > 1 + 1e-12)):
        raise DomainMembershipError("(x, y) outside the depth-one region over [0, 1]")

    def h(t):
        return gx - gadget.Q(x - t, t)

    lo = np.zeros_like(x)
    hi = np.full_like(x, gadget.r1)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = h(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * gadget.r1):
            break
    t = 0.5 * (lo + hi)
    t = np.where(target <= 0, 0.0, t)
    resid = np.abs(h(t) - target)
    if np.any(resid > tol):
        raise ConvergenceError(f"bisection residual {resid.max():.3e} above {tol:.1e}")
    return x - t, t


def injectivity_probe(gadget: PhiGadget, n_pairs=1000, seed=0, tol=1e-9, scan=400):
    """Sample E+ and look for two parameter pairs with the same image.

    Two checks: random pairs with distinct parameters must have distinct
    images, and for each sampled (z, t) the equation h(s) = g(x) - y on
    s in [0, t_max] must have a single crossing (h strictly increasing).
    Returns the number of violations.
    """
    rng = np.random.default_rng(seed)

    def draw(count):
        z = rng.uniform(-1.0, 2.0, 4 * count)
        t = rng.uniform(0.0, gadget.r0, 4 * count)
        ok = gadget.in_E(z, t)
        return z[ok][:count], t[ok][:count]

    z1, t1 = draw(n_pairs)
    z2, t2 = draw(n_pairs)
    m = min(len(z1), len(z2))
    z1, t1, z2, t2 = z1[:m], t1[:m], z2[:m], t2[:m]
    x1, y1, _ = phi_forward(gadget, z1, t1)
    x2, y2, _ = phi_forward(gadget, z2, t2)
    distinct = np.hypot(z1 - z2, t1 - t2) > tol
    same = np.hypot(x1 - x2, y1 - y2) <= 1e-13
    violations = int(np.count_nonzero(distinct & same))

    ev, _ = _scalar_views(gadget.g)
    s = np.linspace(0.0, 1.0, scan)
    for x, y in zip(x1, y1):
        smax = min(gadget.r0, x + 1.0)
        grid = s * smax
        h = ev(np.array(x)) - gadget.Q(x - grid, grid)
        if np.any(np.diff(h) <= 0):
            violations += 1
    return violations


# --- general C^alpha domains built from graph patches -----------------------


@dataclass(frozen=True, eq=False)
class GeneralCAlphaDomain:
    """A compact C^alpha domain described by boundary graph patches.

    ``atlas`` holds (GraphDomain, frame) pairs where ``frame`` maps local
    points (x, y) to global coordinates.  ``contains`` and
    ``boundary_sampler`` are used by the rolling-ball check.
    """

    atlas: list
    kappa0: float
    norm_alpha: float
    contains: Callable
    boundary_sampler: Callable
    name: str = "domain"


def lalpha_ball(alpha, d=2, kappa0=None):
    """The unit ball of the l_alpha norm, covered by 2d graph patches."""
    alpha = float(alpha)
    k = d - 1

    def contains(p, tol=1e-12):
        return np.sum(np.abs(p) ** alpha, axis=-1) <= 1.0 + tol

    def sampler(count, seed=0):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal((count, d))
        v /= np.sum(np.abs(v) ** alpha, axis=-1, keepdims=True) ** (1.0 / alpha)
        grad = np.sign(v) * np.abs(v) ** (alpha - 1.0)
        normal = grad / np.linalg.norm(grad, axis=-1, keepdims=True)
        return v, normal

    reach = (1.0 - 1.0 / d) ** (1.0 / alpha)

    def patch_g():
        def ev(x):
            return np.maximum(1.0 - np.sum(np.abs(x) ** alpha, axis=-1), 0.0) ** (1.0 / alpha)

        def gr(x):
            s = np.maximum(1.0 - np.sum(np.abs(x) ** alpha, axis=-1), 1e-300)
            return -(s ** (1.0 / alpha - 1.0))[..., None] * np.sign(x) * np.abs(x) ** (alpha - 1.0)

        box = Box.cube(-reach, reach, k)
        probe = AlphaGraphFunction(ev, gr, alpha, 1.0, box, kinks=_kinks(0.0, k) if alpha < 2 else ())
        L = 1.5 * max(1.0, hoelder_check(probe, 4000, seed=1))
        return AlphaGraphFunction(ev, gr, alpha, L, box, kinks=probe.kinks, name=f"lball-patch:{alpha:g}")

    gfun = patch_g()
    atlas = []
    for axis in range(d):
        for sign in (1.0, -1.0):
            inner = Box.cube(-0.5 * reach, 0.5 * reach, k)
            outer = Box.cube(-reach, reach, k)
            dom = GraphDomain(gfun, inner, outer, 0.1, 0.2)

            def frame(local, axis=axis, sign=sign):
                local = np.asarray(local, dtype=float)
                out = np.empty_like(local)
                others = [i for i in range(d) if i != axis]
                out[..., others] = local[..., :-1]
                out[..., axis] = sign * local[..., -1]
                return out

            atlas.append((dom, frame))
    if kappa0 is None:
        kappa0 = 0.25 if alpha < 2 else 0.5
    return GeneralCAlphaDomain(atlas, kappa0, alpha, contains, sampler, f"lball:{alpha:g}")


def rolling_ball_check(domain: GeneralCAlphaDomain, n_boundary=200, n_samples=200, seed=0):
    """Count sampled points of the inner/outer l_alpha balls on the wrong side.

    For each boundary point xi with outer normal n, points of
    B^alpha(xi - kappa0 n, kappa0) must lie in the domain and points of
    B^alpha(xi + kappa0 n, kappa0) outside it.
    """
    rng = np.random.default_rng(seed)
    xi, normal = domain.boundary_sampler(n_boundary, seed)
    a, kap = domain.norm_alpha, domain.kappa0
    d = xi.shape[-1]
    bad_in = bad_out = 0
    for p, nv in zip(xi, normal):
        cube = rng.uniform(-kap, kap, size=(4 * n_samples, d))
        ball = cube[np.sum(np.abs(cube) ** a, axis=-1) < kap**a * (1 - 1e-9)][:n_samples]
        bad_in += int(np.count_nonzero(~domain.contains(p - kap * nv + ball, tol=1e-12)))
        bad_out += int(np.count_nonzero(domain.contains(p + kap * nv + ball, tol=-1e-12)))
    return bad_in, bad_out
