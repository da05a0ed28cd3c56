"""Reference integrals and L^p norms on graph domains.

All region integrals are iterated in flattened coordinates (x, z) with
y = g(x) - z, so a graph domain becomes a box times [0, depth].  Outer rules
are composite Gauss-Legendre graded toward the kinks of g; inner rules are
graded toward the boundary z = 0 whenever the weight is singular there.
"""

from __future__ import annotations

import functools
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigurationError, ParameterError

__all__ = [
    "QuadratureSpec",
    "NormResult",
    "DeltaNGamma",
    "InvSqrt",
    "UnitWeight",
    "graded_rule",
    "tensor_rule",
    "integrate_region",
    "lp_norm_region",
    "weighted_1d_norm",
    "doubling_constant_estimate",
    "discrete_lp_norm",
]


@functools.lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    x, w = leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def graded_rule(a, b, order, toward=(), levels=40, ratio=0.25, max_width=None):
    """Composite Gauss-Legendre rule on [a, b].

    Breakpoints accumulate geometrically (factor ``ratio``) toward every point
    of ``toward`` lying in [a, b]; panels wider than ``max_width`` are split
    evenly.  Returns ``(nodes, weights)``.
    """
    a, b = float(a), float(b)
    if not b > a:
        raise ParameterError(f"empty interval [{a}, {b}]")
    if not 0.0 < ratio < 1.0:
        raise ParameterError("grading ratio must lie in (0, 1)")
    pts = [a, b]
    for t in toward:
        t = float(t)
        if t < a or t > b:
            continue
        pts.append(t)
        for side, sign in ((t - a, -1.0), (b - t, 1.0)):
            if side <= 0.0:
                continue
            pts.extend(t + sign * side * ratio ** np.arange(1, levels + 1))
    # merge breakpoints closer than rounding so the panels still tile [a, b]
    eps = 4 * np.finfo(float).eps
    bp = [a]
    for v in np.unique(np.asarray(pts, dtype=float))[1:]:
        if v - bp[-1] > eps * max(abs(v), abs(bp[-1])):
            bp.append(float(v))
    bp[-1] = b
    bp = np.asarray(bp)
    lo, hi = bp[:-1], bp[1:]
    if max_width is not None:
        pieces = np.maximum(1, np.ceil((hi - lo) / max_width - 1e-12)).astype(int)
        if np.any(pieces > 1):
            new_lo, new_hi = [], []
            for l, h, k in zip(lo, hi, pieces):
                edges = np.linspace(l, h, k + 1)
                new_lo.append(edges[:-1])
                new_hi.append(edges[1:])
            lo, hi = np.concatenate(new_lo), np.concatenate(new_hi)
    gx, gw = _gauss_legendre(int(order))
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def tensor_rule(rules):
    """Tensor product of 1D ``(nodes, weights)`` rules -> ``(points (N, k), weights (N,))``."""
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, w


@dataclass(frozen=True)
class QuadratureSpec:
    """Orders and grading of the region quadrature.

    ``outer_order``/``panel_order`` are Gauss points per panel in x and z;
    both double at every refinement level.  ``inner_panels`` geometric panels
    accumulate at z = 0 when the weight is singular there.
    """

    outer_order: int = 8
    inner_panels: int = 40
    panel_order: int = 8
    rel_tol: float = 1e-8
    grading_ratio: float = 0.25
    outer_levels: int = 10
    max_width: float = 0.25
    max_level: int = 3
    chunk: int = 4096

    def __post_init__(self):
        if self.outer_order < 2 or self.panel_order < 2:
            raise ParameterError("quadrature orders must be >= 2")
        if not 0.0 < self.grading_ratio < 1.0:
            raise ParameterError("grading_ratio must lie in (0, 1)")
        if self.rel_tol <= 0 or self.max_level < 1 or self.inner_panels < 1:
            raise ParameterError("invalid quadrature refinement settings")


@dataclass
class NormResult:
    """Value of a norm (or integral) with the gap between the last two levels."""

    value: object
    err_est: object
    levels_used: int
    warning: bool = False

    def to_dict(self):
        def conv(v):
            return np.asarray(v).tolist()

        return {
            "value": conv(self.value),
            "err_est": conv(self.err_est),
            "levels_used": self.levels_used,
            "warning": bool(self.warning),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class DeltaNGamma:
    """The weight delta_n^(gamma p) = (z + 1/n^2)^(gamma p)."""

    n: int
    gamma: float
    graded = True

    def __call__(self, z, p):
        return (z + 1.0 / self.n**2) ** (self.gamma * p)


@dataclass(frozen=True)
class InvSqrt:
    """The weight (eps + z)^(-1/2)."""

    eps: float
    graded = True

    def __call__(self, z, p):
        return (self.eps + z) ** -0.5


@dataclass(frozen=True)
class UnitWeight:
    graded = False

    def __call__(self, z, p):
        return np.ones_like(z)


def _x_rules(domain, box, order, spec):
    kinks = domain.g.kinks
    rules = []
    for i in range(len(box.lo)):
        toward = kinks[i] if i < len(kinks) else ()
        rules.append(
            graded_rule(
                box.lo[i],
                box.hi[i],
                order,
                toward=toward,
                levels=spec.outer_levels,
                ratio=spec.grading_ratio,
                max_width=spec.max_width,
            )
        )
    return tensor_rule(rules)


def _z_rule(order, spec, graded, width=1.0):
    """Reference rule on [0, 1] for the depth variable."""
    if graded:
        return graded_rule(
            0.0,
            1.0,
            order,
            toward=(0.0,),
            levels=spec.inner_panels,
            ratio=spec.grading_ratio,
            max_width=spec.max_width / max(width, 1e-300),
        )
    return graded_rule(0.0, 1.0, order, max_width=spec.max_width / max(width, 1e-300))


def _sum_chunks(fn, nchunks, threads):
    if threads and threads > 1 and nchunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(fn, range(nchunks)))
    else:
        parts = [fn(c) for c in range(nchunks)]
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    return total


def _integrate_once(h, domain, xbox, zhi, depth, spec, graded, level, threads):
    order_x = spec.outer_order * 2**level
    order_z = spec.panel_order * 2**level
    X, WX = _x_rules(domain, xbox, order_x, spec)
    S, WS = _z_rule(order_z, spec, graded, width=depth)
    gx = domain.g(X)
    if zhi is None:
        top = np.full(len(X), float(depth))
    else:
        top = np.clip(zhi(X), 0.0, depth)
    active = top > 0
    X, WX, gx, top = X[active], WX[active], gx[active], top[active]
    ns = len(S)
    per_chunk = max(1, spec.chunk // max(ns, 1))
    nchunks = max(1, math.ceil(len(X) / per_chunk))

    def work(c):
        sl = slice(c * per_chunk, (c + 1) * per_chunk)
        x, wx, g0, t = X[sl], WX[sl], gx[sl], top[sl]
        z = t[:, None] * S[None, :]
        w = (wx * t)[:, None] * WS[None, :]
        pts = np.concatenate(
            [
                np.repeat(x, ns, axis=0),
                (g0[:, None] - z).reshape(-1, 1),
            ],
            axis=1,
        )
        vals = np.asarray(h(pts, z.ravel()))
        wv = w.ravel()
        if vals.ndim == 1:
            return np.dot(wv, vals)
        return wv @ vals

    return _sum_chunks(work, nchunks, threads)


def integrate_region(
    h,
    domain,
    region="G",
    spec: QuadratureSpec | None = None,
    graded=False,
    xbox=None,
    zhi: Callable | None = None,
    threads=None,
):
    """Integrate ``h(points, z)`` over a region of a graph domain.

    ``h`` receives points (N, d) and their depths z = g(x) - y (N,) and returns
    (N,) or (N, K) values.  ``region`` is ``"G"`` or ``"G*"``; ``xbox`` and
    ``zhi`` (depth cap as a function of x) restrict it further.  Orders double
    until the relative change drops below ``spec.rel_tol``.
    """
    spec = spec or QuadratureSpec()
    box, depth = domain.region(region)
    xbox = xbox or box
    prev = None
    for level in range(spec.max_level + 1):
        cur = np.asarray(
            _integrate_once(h, domain, xbox, zhi, depth, spec, graded, level, threads),
            dtype=float,
        )
        if prev is not None:
            err = np.abs(cur - prev)
            if np.all(err <= spec.rel_tol * np.maximum(np.abs(cur), 1e-300)):
                return NormResult(cur, err, level + 1, False)
        prev = cur
    warnings.warn("region quadrature did not reach rel_tol", RuntimeWarning, stacklevel=2)
    return NormResult(cur, err, spec.max_level + 1, True)


def lp_norm_region(
    f,
    domain,
    p,
    region="G",
    weight=None,
    spec: QuadratureSpec | None = None,
    threads=None,
):
    """(iint |f|^p w)^(1/p) over ``G`` or ``G*`` of a graph domain.

    ``f`` maps points (N, d) to (N,) or (N, K) values; ``weight`` is ``None``
    or a weight object called as ``weight(z, p)``.
    """
    if not p > 0:
        raise ParameterError("p must be positive")
    weight = weight or UnitWeight()

    def h(pts, z):
        v = np.abs(np.asarray(f(pts))) ** p
        w = weight(z, p)
        return v * (w if v.ndim == 1 else w[:, None])

    raw = integrate_region(h, domain, region, spec, weight.graded, threads=threads)
    value = np.maximum(raw.value, 0.0) ** (1.0 / p)
    prev = np.maximum(raw.value - raw.err_est, 0.0) ** (1.0 / p)
    return NormResult(value, np.abs(value - prev), raw.levels_used, raw.warning)


def _as_callable(f):
    if callable(f):
        return f
    coeffs = np.atleast_1d(np.asarray(f, dtype=float))
    return np.polynomial.Polynomial(coeffs)


def weighted_1d_norm(f, p, beta, order=16, levels=40):
    """(int_0^1 |f(x)|^p x^beta dx)^(1/p) for a univariate polynomial ``f``.

    ``f`` is a numpy polynomial instance, a coefficient vector (power basis)
    or any callable.  Grading toward 0 absorbs the x^beta singularity; real
    zeros of ``f`` become extra breakpoints so non-even p stays accurate.
    """
    if beta < -0.5:
        raise ParameterError("beta must be >= -1/2")
    fn = _as_callable(f)
    toward = [0.0]
    if hasattr(fn, "roots"):
        try:
            r = np.asarray(fn.roots())
            r = r[np.abs(r.imag) < 1e-10].real if np.iscomplexobj(r) else r
            toward.extend(float(t) for t in r if 0.0 < t < 1.0)
        except np.linalg.LinAlgError:
            pass
    x, w = graded_rule(0.0, 1.0, order, toward=toward, levels=levels, max_width=1.0 / 16)
    vals = np.abs(np.asarray(fn(x), dtype=float)) ** p * x**beta
    return float(np.dot(w, vals)) ** (1.0 / p)


def _interval_family(a, b, num_intervals, num_scales):
    family = []
    for s in range(1, num_scales + 1):
        L = (b - a) / 2**s
        lefts = a + L * np.arange(2**s)
        if len(lefts) > num_intervals:
            idx = np.unique(np.round(np.linspace(0, len(lefts) - 1, num_intervals)).astype(int))
            lefts = lefts[idx]
        family.extend((float(l), float(l + L)) for l in lefts)
    return family


def doubling_constant_estimate(
    w,
    interval=(0.0, 1.0),
    num_intervals=64,
    num_scales=12,
    singular: Sequence[float] = (),
    order=16,
):
    """Largest observed ratio int_{2J cap I} w / int_J w over a dyadic family of J.

    2J has the midpoint of J and twice its length.  J runs over the dyadic
    subintervals of I of length |I| 2^-s, s = 1..num_scales, thinned evenly
    (ends kept) to at most ``num_intervals`` per scale.
    """
    a, b = map(float, interval)
    special = [a, b, *map(float, singular)]

    def integral(lo, hi):
        toward = [t for t in special if lo <= t <= hi]
        x, wt = graded_rule(lo, hi, order, toward=toward, levels=40)
        return float(np.dot(wt, w(x)))

    best = 0.0
    for lo, hi in _interval_family(a, b, num_intervals, num_scales):
        mass = integral(lo, hi)
        if not mass > 0.0:
            warnings.warn(f"zero-mass interval [{lo}, {hi}] skipped", RuntimeWarning, stacklevel=2)
            continue
        half = 0.5 * (hi - lo)
        big = integral(max(a, lo - half), min(b, hi + half))
        best = max(best, big / mass)
    return best


def discrete_lp_norm(f, mesh, p):
    """(sum_cells |cell| |f(node)|^p)^(1/p), accumulated in cell order.

    ``f`` maps node arrays (N, d) to (N,) or (N, K).
    """
    if mesh.nodes is None:
        raise ConfigurationError("mesh has no nodes; call pick_nodes first")
    vals = np.abs(np.asarray(f(mesh.nodes), dtype=float)) ** p
    total = mesh.measures @ vals
    return np.maximum(total, 0.0) ** (1.0 / p)
