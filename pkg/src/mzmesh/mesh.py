"""Layered Marcinkiewicz-Zygmund partitions of a graph domain.

Layer j (1..m) holds the points whose depth g(x) - y lies in
[z_{j-1}, z_j] with z_j = depth * j^2 / m^2.  Layer j is cut into N_j
slabs (d = 2) or N_j^(d-1) equal cubes (d >= 3) of the base box, where
N_j = max(m, ceil(m (m/j)^(2 gamma))) and gamma = 1/alpha - 1/2.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np

from .domain import GraphDomain
from .errors import DomainMembershipError, ParameterError

__all__ = [
    "MeshParams",
    "MZMesh",
    "layer_counts",
    "build_mesh",
    "build_mesh_2d",
    "build_mesh_hd",
    "pick_nodes",
    "mesh_cardinality",
    "locate_cell",
]

NODE_POLICIES = ("center", "random", "corner")
_CORNER_PUSH = 1e-12


@dataclass(frozen=True)
class MeshParams:
    """Degree n, oscillation budget epsilon, smoothness alpha and m = ceil(c0 n / epsilon)."""

    n: int
    epsilon: float
    alpha: float
    c0: float = 2.0
    node_policy: str = "center"
    seed: int = 0
    refine: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError("n must be a positive integer")
        if not 0 < self.epsilon <= 1:
            raise ParameterError("epsilon must lie in (0, 1]")
        if not 1.0 <= self.alpha <= 2.0:
            raise ParameterError("alpha must lie in [1, 2]")
        if not self.c0 > 0:
            raise ParameterError("c0 must be positive")
        if self.node_policy not in NODE_POLICIES:
            raise ParameterError(f"node policy must be one of {NODE_POLICIES}")
        if int(self.refine) != self.refine or self.refine < 1:
            raise ParameterError("refine must be a positive integer")
        if self.m < 2 * self.n:
            raise ParameterError(f"m = {self.m} is below 2n; raise c0 or lower epsilon")

    @property
    def m(self):
        # guard against c0 * n / eps landing a hair above an integer
        v = self.c0 * self.n / self.epsilon
        return max(1, math.ceil(v - 1e-9 * v))

    @property
    def gamma(self):
        return 1.0 / self.alpha - 0.5


def layer_counts(m, alpha):
    """N_j for j = 1..m."""
    gamma = 1.0 / alpha - 0.5
    j = np.arange(1, m + 1, dtype=float)
    raw = m * (m / j) ** (2.0 * gamma)
    counts = np.ceil(raw - 1e-9 * raw).astype(np.int64)
    return np.maximum(counts, m)


@dataclass(frozen=True, eq=False)
class MZMesh:
    """Cells of the partition in flattened (x, depth) coordinates.

    Per-cell arrays: ``layer`` (1-based), ``index`` (1-based per axis),
    ``x_lo``/``x_hi`` (base slab or cube), ``z_lo``/``z_hi`` (depth range),
    ``measures`` and optionally ``nodes`` (points of R^d).
    """

    params: MeshParams
    domain: GraphDomain
    m: int
    z_breaks: np.ndarray
    counts: np.ndarray
    layer: np.ndarray
    index: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray
    measures: np.ndarray
    nodes: np.ndarray | None = None

    @property
    def d(self):
        return self.domain.dim

    @property
    def num_layers(self):
        return len(self.counts)

    @property
    def num_cells(self):
        return len(self.measures)

    @property
    def offsets(self):
        per = self.counts ** (self.d - 1)
        return np.concatenate([[0], np.cumsum(per)])

    def layer_table(self):
        return [
            {"j": j + 1, "z_lo": float(self.z_breaks[j]), "z_hi": float(self.z_breaks[j + 1]), "N_j": int(self.counts[j])}
            for j in range(self.num_layers)
        ]

    def to_dict(self):
        cells = []
        for c in range(self.num_cells):
            cells.append(
                {
                    "layer": int(self.layer[c]),
                    "index": [int(v) for v in self.index[c]],
                    "box": {
                        "x_lo": self.x_lo[c].tolist(),
                        "x_hi": self.x_hi[c].tolist(),
                        "z_lo": float(self.z_lo[c]),
                        "z_hi": float(self.z_hi[c]),
                    },
                    "measure": float(self.measures[c]),
                    "node": None if self.nodes is None else self.nodes[c].tolist(),
                }
            )
        return {
            "params": asdict(self.params) | {"m": self.m, "d": self.d, "domain": self.domain.g.name},
            "layers": self.layer_table(),
            "cells": cells,
        }

    def to_json(self, indent=None):
        return json.dumps(self.to_dict(), indent=indent)

    def to_csv(self):
        k = self.d - 1
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["j", "i"] + [f"x_lo{a}" for a in range(k)] + [f"x_hi{a}" for a in range(k)]
        head += ["z_lo", "z_hi", "measure"] + [f"node{a}" for a in range(self.d)]
        w.writerow(head)
        for c in range(self.num_cells):
            node = [] if self.nodes is None else [repr(float(v)) for v in self.nodes[c]]
            w.writerow(
                [int(self.layer[c]), "-".join(str(int(v)) for v in self.index[c])]
                + [repr(float(v)) for v in self.x_lo[c]]
                + [repr(float(v)) for v in self.x_hi[c]]
                + [repr(float(self.z_lo[c])), repr(float(self.z_hi[c])), repr(float(self.measures[c]))]
                + node
            )
        return buf.getvalue()


def _layers(params: MeshParams, depth):
    """(m_eff, z_breaks, N_j) including refinement by ``params.refine``."""
    m, r = params.m, params.refine
    base_counts = layer_counts(m, params.alpha)
    me = m * r
    j = np.arange(me + 1, dtype=float)
    z = depth * j**2 / me**2
    z[-1] = depth
    counts = np.repeat(base_counts, r) * r
    return me, z, counts


def _assemble(domain: GraphDomain, params: MeshParams):
    box, depth = domain.region("G")
    k = box.dim
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    me, z, counts = _layers(params, depth)
    vol = box.volume
    layer, index, xl, xh, zl, zh, meas = [], [], [], [], [], [], []
    for j in range(1, me + 1):
        Nj = int(counts[j - 1])
        grid = np.stack(
            [g.ravel() for g in np.meshgrid(*([np.arange(1, Nj + 1)] * k), indexing="ij")], axis=-1
        )
        frac_lo = (grid - 1) / Nj
        frac_hi = grid / Nj
        c = len(grid)
        layer.append(np.full(c, j))
        index.append(grid)
        xl.append(lo + (hi - lo) * frac_lo)
        xh.append(np.where(grid == Nj, hi, lo + (hi - lo) * frac_hi))
        zl.append(np.full(c, z[j - 1]))
        zh.append(np.full(c, z[j]))
        meas.append(np.full(c, vol * (z[j] - z[j - 1]) / Nj**k))
    return MZMesh(
        params,
        domain,
        me,
        z,
        counts,
        np.concatenate(layer),
        np.concatenate(index),
        np.concatenate(xl),
        np.concatenate(xh),
        np.concatenate(zl),
        np.concatenate(zh),
        np.concatenate(meas),
    )


def build_mesh_2d(domain: GraphDomain, params: MeshParams) -> MZMesh:
    if domain.dim != 2:
        raise ParameterError("build_mesh_2d needs a planar domain")
    return pick_nodes(_assemble(domain, params), params.node_policy, params.seed)


def build_mesh_hd(domain: GraphDomain, params: MeshParams, force=False) -> MZMesh:
    d = domain.dim
    if d < 3:
        raise ParameterError("build_mesh_hd needs d >= 3")
    if params.alpha <= 2.0 - 2.0 / d:
        if not force:
            raise ParameterError(f"alpha must exceed 2 - 2/d = {2 - 2 / d:.4g} (use force to override)")
        warnings.warn("alpha <= 2 - 2/d: the cardinality bound n^d degrades", RuntimeWarning, stacklevel=2)
    return pick_nodes(_assemble(domain, params), params.node_policy, params.seed)


def build_mesh(domain: GraphDomain, params: MeshParams, force=False) -> MZMesh:
    if domain.dim == 2:
        return build_mesh_2d(domain, params)
    return build_mesh_hd(domain, params, force)


def pick_nodes(mesh: MZMesh, policy="center", seed=0) -> MZMesh:
    """Attach one node per cell: midpoint, seeded uniform, or pushed-in corner."""
    if policy == "center":
        x = 0.5 * (mesh.x_lo + mesh.x_hi)
        z = 0.5 * (mesh.z_lo + mesh.z_hi)
    elif policy == "random":
        rng = np.random.default_rng(seed)
        u = rng.random(mesh.x_lo.shape)
        v = rng.random(mesh.z_lo.shape)
        x = mesh.x_lo + u * (mesh.x_hi - mesh.x_lo)
        z = mesh.z_lo + v * (mesh.z_hi - mesh.z_lo)
    elif policy == "corner":
        # smallest x and smallest y, i.e. the deepest end of the layer
        x = mesh.x_lo + _CORNER_PUSH
        z = mesh.z_hi - _CORNER_PUSH
    else:
        raise ParameterError(f"node policy must be one of {NODE_POLICIES}")
    return replace(mesh, nodes=mesh.domain.lift(x, z))


def mesh_cardinality(params: MeshParams, d=2):
    """Exact cell count, per-layer table and the normalised constant N / n^d.

    For alpha = 1 in the plane the normalisation is n^2 log n.
    """
    me, z, counts = _layers(params, 1.0)
    per = counts.astype(np.int64) ** (d - 1)
    total = int(per.sum())
    n = params.n
    if d == 2 and params.alpha == 1.0:
        norm = n**2 * max(math.log(n), 1.0)
    else:
        norm = float(n**d)
    return {
        "m": int(me),
        "total": total,
        "per_layer": [{"j": j + 1, "N_j": int(counts[j]), "cells": int(per[j])} for j in range(me)],
        "constant": total / norm,
    }


def locate_cell(mesh: MZMesh, xi):
    """Flat cell id for points of G; ties go to the smaller layer and slab index."""
    pts = np.atleast_2d(np.asarray(xi, dtype=float))
    dom = mesh.domain
    if not np.all(dom.contains(pts, "G")):
        raise DomainMembershipError("points must lie in G")
    box, _ = dom.region("G")
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    z = np.clip(dom.depth(pts), 0.0, None)
    j = np.clip(np.searchsorted(mesh.z_breaks, z, side="left"), 1, mesh.num_layers)
    Nj = mesh.counts[j - 1]
    frac = np.clip((pts[:, :-1] - lo) / (hi - lo), 0.0, 1.0)
    i = np.clip(np.ceil(frac * Nj[:, None]), 1, Nj[:, None]).astype(np.int64)
    k = dom.dim - 1
    flat = np.zeros(len(pts), dtype=np.int64)
    for a in range(k):
        flat = flat * Nj + (i[:, a] - 1)
    ids = mesh.offsets[j - 1] + flat
    return ids if np.ndim(xi) > 1 else int(ids[0])
