"""Build an MZ mesh on a C^{1,1/2} graph domain and compare discrete and continuous L^2 norms."""

import numpy as np

from mzmesh.domain import model_domain
from mzmesh.integrate import discrete_lp_norm, lp_norm_region
from mzmesh.mesh import MeshParams, build_mesh, mesh_cardinality
from mzmesh.poly import random_ensemble

dom = model_domain("alpha:1.5")
params = MeshParams(8, 0.25, 1.5)
mesh = build_mesh(dom, params)
print(f"degree 8, epsilon 0.25: {len(mesh.measures)} cells, total measure {mesh.measures.sum():.15f}")

# cardinality grows like n^d
for n in (4, 8, 16, 32):
    card = mesh_cardinality(MeshParams(n, 0.25, 1.5))
    print(f"  n={n:3d}  m={card['m']:4d}  cells={card['total']:6d}  cells/n^2={card['constant']:.2f}")

ens = random_ensemble(2, 8, 10, 0, dom.bounding_box("G"))
cont = lp_norm_region(ens, dom, 2).value
disc = discrete_lp_norm(ens, mesh, 2)
ratio = disc / cont
print(f"discrete/continuous norm ratios: min {ratio.min():.4f}, max {ratio.max():.4f}")
assert np.all((ratio >= 0.5) & (ratio <= 2.0))
