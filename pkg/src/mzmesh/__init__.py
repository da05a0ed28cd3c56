"""Marcinkiewicz-Zygmund meshes and polynomial inequalities on C^alpha graph domains."""

from .domain import (
    AlphaGraphFunction,
    Box,
    GeneralCAlphaDomain,
    GraphDomain,
    PhiGadget,
    boundary_cap_max,
    delta_n,
    dist_to_essential_boundary,
    model_domain,
    model_function,
    phi_forward,
    phi_inverse_plus,
    sharpness_domain,
    steklov_transform,
    tangent_frame,
    tangential_gradient,
)
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainMembershipError,
    GeometryError,
    MZMeshError,
    ParameterError,
)
from .integrate import NormResult, QuadratureSpec, discrete_lp_norm, lp_norm_region, weighted_1d_norm
from .mesh import MeshParams, MZMesh, build_mesh, locate_cell, mesh_cardinality, pick_nodes
from .poly import JacobiSpec, MultiPoly, SharpnessSpec, jacobi_eval, random_ensemble, random_poly, sharpness_poly_build
from .verify import ExperimentReport

__version__ = "0.1.0"
