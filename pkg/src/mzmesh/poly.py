"""Multivariate polynomials in a box-scaled tensor Chebyshev basis, Jacobi
polynomials, and the product polynomial used for the sharpness experiment."""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .domain import Box
from .errors import ParameterError

__all__ = [
    "multi_indices",
    "num_coefficients",
    "MultiPoly",
    "random_poly",
    "random_ensemble",
    "JacobiSpec",
    "jacobi_eval",
    "jacobi_p",
    "SharpnessSpec",
    "SharpnessPoly",
    "sharpness_poly_build",
]

_CHUNK_ELEMS = 2_000_000


def num_coefficients(d, n):
    return math.comb(n + d, d)


@lru_cache(maxsize=64)
def multi_indices(d, n):
    """All kappa in N^d with |kappa| <= n, graded by total degree, reverse lexicographic within a degree."""
    rows = [
        k
        for total in range(n + 1)
        for k in sorted(
            (k for k in itertools.product(range(total + 1), repeat=d) if sum(k) == total), reverse=True
        )
    ]
    arr = np.array(rows, dtype=np.int64).reshape(-1, d)
    arr.setflags(write=False)
    return arr


def _cheb_tables(t, n):
    """T_k(t) and T_k'(t) for k = 0..n; t has shape (N,)."""
    T = np.empty(t.shape + (n + 1,))
    dT = np.zeros(t.shape + (n + 1,))
    T[..., 0] = 1.0
    if n >= 1:
        T[..., 1] = t
        dT[..., 1] = 1.0
        U_prev, U = np.ones_like(t), 2.0 * t  # U_0, U_1
    for k in range(2, n + 1):
        T[..., k] = 2.0 * t * T[..., k - 1] - T[..., k - 2]
        dT[..., k] = k * U
        U_prev, U = U, 2.0 * t * U - U_prev
    return T, dT


@dataclass(frozen=True, eq=False)
class MultiPoly:
    """Polynomial sum_kappa c_kappa prod_i T_{kappa_i}(t_i) with t the box-scaled point.

    ``coeffs`` has shape (ncoef,) for one polynomial or (ncoef, K) for an
    ensemble of K polynomials sharing the basis.
    """

    dim: int
    degree: int
    box: Box
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape[0] != num_coefficients(self.dim, self.degree):
            raise ParameterError(
                f"expected {num_coefficients(self.dim, self.degree)} coefficients, got {c.shape[0]}"
            )
        if self.box.dim != self.dim:
            raise ParameterError("box dimension does not match polynomial dimension")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def size(self):
        return 1 if self.coeffs.ndim == 1 else self.coeffs.shape[1]

    @property
    def indices(self):
        return multi_indices(self.dim, self.degree)

    def item(self, i):
        if self.coeffs.ndim == 1:
            return self
        return MultiPoly(self.dim, self.degree, self.box, self.coeffs[:, i])

    def scaled(self, lam):
        return MultiPoly(self.dim, self.degree, self.box, lam * self.coeffs)

    def _scaled_points(self, pts):
        lo, hi = np.asarray(self.box.lo), np.asarray(self.box.hi)
        t = (2.0 * pts - (lo + hi)) / (hi - lo)
        if np.any(np.abs(t) > 1.0 + 1e-9):
            warnings.warn("polynomial evaluated outside its basis box", RuntimeWarning, stacklevel=3)
        return t, 2.0 / (hi - lo)

    def eval_grad(self, points, grad=True):
        """Values (N,) or (N, K) and gradients (N, d) or (N, K, d)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lead = pts.shape[:-1]
        pts = pts.reshape(-1, self.dim)
        N = len(pts)
        idx = self.indices
        C = self.coeffs if self.coeffs.ndim == 2 else self.coeffs[:, None]
        K = C.shape[1]
        vals = np.empty((N, K))
        grads = np.empty((N, K, self.dim)) if grad else None
        per = max(1, _CHUNK_ELEMS // len(idx))
        for s in range(0, N, per):
            t, jac = self._scaled_points(pts[s : s + per])
            tabs = [_cheb_tables(t[:, i], self.degree) for i in range(self.dim)]
            factors = [T[:, idx[:, i]] for i, (T, _) in enumerate(tabs)]
            B = np.prod(factors, axis=0) if self.dim > 1 else factors[0]
            vals[s : s + per] = B @ C
            if grad:
                for i in range(self.dim):
                    dB = tabs[i][1][:, idx[:, i]] * jac[i]
                    for j in range(self.dim):
                        if j != i:
                            dB = dB * factors[j]
                    grads[s : s + per, :, i] = dB @ C
        if self.coeffs.ndim == 1:
            vals = vals[:, 0]
            if grad:
                grads = grads[:, 0, :]
        vals = vals.reshape(lead + vals.shape[1:])
        if grad:
            grads = grads.reshape(lead + grads.shape[1:])
        return vals, grads

    def __call__(self, points):
        return self.eval_grad(points, grad=False)[0]

    def to_dict(self):
        if self.coeffs.ndim != 1:
            raise ParameterError("serialize ensemble members one at a time")
        return {
            "dim": self.dim,
            "degree": self.degree,
            "basis": "cheb",
            "box": self.box.to_dict(),
            "coeffs": [[list(map(int, k)), float(c)] for k, c in zip(self.indices, self.coeffs)],
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        if data.get("basis") != "cheb":
            raise ParameterError("only the 'cheb' basis is supported")
        d, n = int(data["dim"]), int(data["degree"])
        box = Box(tuple(data["box"]["lo"]), tuple(data["box"]["hi"]))
        pos = {tuple(k): i for i, k in enumerate(multi_indices(d, n).tolist())}
        coeffs = np.zeros(num_coefficients(d, n))
        for k, c in data["coeffs"]:
            coeffs[pos[tuple(k)]] = c
        return cls(d, n, box, coeffs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def constant(cls, box: Box, value=1.0):
        return cls(box.dim, 0, box, np.array([float(value)]))

    @classmethod
    def linear(cls, box: Box, const=0.0, grad=None):
        """const + grad . x, written in the scaled basis."""
        d = box.dim
        grad = np.zeros(d) if grad is None else np.asarray(grad, dtype=float)
        mid = 0.5 * (np.asarray(box.lo) + np.asarray(box.hi))
        half = 0.5 * (np.asarray(box.hi) - np.asarray(box.lo))
        coeffs = np.zeros(d + 1)
        coeffs[0] = const + grad @ mid
        idx = multi_indices(d, 1)
        for r in range(1, d + 1):
            i = int(np.argmax(idx[r]))
            coeffs[r] = grad[i] * half[i]
        return cls(d, 1, box, coeffs)


def random_poly(d, n, seed, box: Box, ensemble="gauss-cheb"):
    """iid standard normal Chebyshev coefficients."""
    if ensemble != "gauss-cheb":
        raise ParameterError(f"unknown ensemble {ensemble!r}")
    if n < 0:
        raise ParameterError("degree must be nonnegative")
    rng = np.random.default_rng(seed)
    return MultiPoly(d, n, box, rng.standard_normal(num_coefficients(d, n)))


def random_ensemble(d, n, size, seed, box: Box, ensemble="gauss-cheb"):
    """K polynomials as one coefficient matrix; item i uses the stream (seed, i)."""
    if ensemble != "gauss-cheb":
        raise ParameterError(f"unknown ensemble {ensemble!r}")
    if n < 0 or size < 1:
        raise ParameterError("need degree >= 0 and size >= 1")
    ncoef = num_coefficients(d, n)
    C = np.stack([np.random.default_rng([seed, i]).standard_normal(ncoef) for i in range(size)], axis=1)
    return MultiPoly(d, n, box, C)


# --- Jacobi polynomials ------------------------------------------------------


@dataclass(frozen=True)
class JacobiSpec:
    """Ultraspherical Jacobi polynomial P_n^(beta, beta)."""

    beta: float
    n: int

    def __post_init__(self):
        if not self.beta > -1:
            raise ParameterError("beta must exceed -1")
        if int(self.n) != self.n or self.n < 0:
            raise ParameterError("degree must be a nonnegative integer")


def jacobi_p(n, a, b, y):
    """P_n^(a,b)(y) by the three-term recurrence."""
    y = np.asarray(y, dtype=float)
    p0 = np.ones_like(y)
    if n == 0:
        return p0
    p1 = (a + 1.0) + (a + b + 2.0) * (y - 1.0) / 2.0
    for k in range(2, n + 1):
        s = 2 * k + a + b
        c1 = 2 * k * (k + a + b) * (s - 2)
        c2 = (s - 1) * (s * (s - 2) * y + a * a - b * b)
        c3 = 2 * (k + a - 1) * (k + b - 1) * s
        p0, p1 = p1, (c2 * p1 - c3 * p0) / c1
    return p1


def jacobi_eval(spec: JacobiSpec, y):
    """Value and derivative of P_n^(beta,beta) at y.

    The derivative uses (n/2 + beta + 1/2) P_{n-1}^(beta+1, beta+1).
    """
    n, b = int(spec.n), float(spec.beta)
    val = jacobi_p(n, b, b, y)
    if n == 0:
        return val, np.zeros_like(val)
    der = (n / 2.0 + b + 0.5) * jacobi_p(n - 1, b + 1.0, b + 1.0, y)
    return val, der


# --- the sharpness polynomial ------------------------------------------------


@dataclass(frozen=True)
class SharpnessSpec:
    """Parameters of Q(x, y) = x_1 J_n(y) g_n(x, y).

    g_n = (1 - (|x|^2 + (1 - y)^2) / T^2)^(b n); beta defaults to 2d + 3.
    """

    d: int
    n: int
    alpha: float
    T: float
    beta: float | None = None
    b: int = 1
    a: float = 0.5

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", float(2 * self.d + 3))
        if self.d < 2:
            raise ParameterError("dimension must be at least 2")
        if not self.beta > 2 * self.d + 2:
            raise ParameterError("beta must exceed 2d + 2")
        if int(self.b) != self.b or self.b < 1:
            raise ParameterError("b must be a positive integer")
        if self.n < 1 or not self.T > 0 or not self.a > 0:
            raise ParameterError("need n >= 1, T > 0 and a > 0")
        if not 1.0 <= self.alpha <= 2.0:
            raise ParameterError("alpha must lie in [1, 2]")

    @property
    def total_degree(self):
        return (2 * self.b + 1) * self.n + 1


@dataclass(frozen=True, eq=False)
class SharpnessPoly:
    """Q held as the product of its three factors, with a product-rule gradient."""

    spec: SharpnessSpec
    scale: float = 1.0

    @property
    def degree(self):
        return self.spec.total_degree

    def factors(self, points):
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., :-1], pts[..., -1]
        s = self.spec
        base = 1.0 - (np.sum(x**2, axis=-1) + (1.0 - y) ** 2) / s.T**2
        e = s.b * s.n
        gn = base**e
        dgn_base = e * base ** (e - 1)
        J, dJ = jacobi_eval(JacobiSpec(s.beta, s.n), y)
        return x, y, J, dJ, gn, dgn_base

    def g_n(self, points):
        return self.factors(points)[4]

    def eval_grad(self, points, grad=True):
        x, y, J, dJ, gn, dgb = self.factors(points)
        T2 = self.spec.T**2
        x1 = x[..., 0]
        val = self.scale * x1 * J * gn
        if not grad:
            return val, None
        dgx = dgb[..., None] * (-2.0 * x / T2)
        dgy = dgb * (2.0 * (1.0 - y) / T2)
        gx = (x1 * J)[..., None] * dgx
        gx[..., 0] += J * gn
        gy = x1 * (dJ * gn + J * dgy)
        grads = np.concatenate([gx, gy[..., None]], axis=-1) * self.scale
        return val, grads

    def __call__(self, points):
        return self.eval_grad(points, grad=False)[0]

    def scaled(self, lam):
        return SharpnessPoly(self.spec, self.scale * lam)

    def tangential_derivative(self, g, points):
        """(d_1 + d_1 g(x) d_d) Q at points (x, y)."""
        pts = np.asarray(points, dtype=float)
        _, grads = self.eval_grad(pts)
        dg = g.grad(pts[..., :-1])[..., 0]
        return grads[..., 0] + dg * grads[..., -1]


def sharpness_poly_build(spec: SharpnessSpec) -> SharpnessPoly:
    return SharpnessPoly(spec)
