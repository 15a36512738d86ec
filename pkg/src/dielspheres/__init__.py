"""Boundary-integral solver for mutually polarising dielectric spheres.

The package discretises the second-kind boundary integral equation for the
induced surface charge on N disjoint dielectric spheres with per-sphere
real spherical-harmonic bases, solves the resulting linear systems with
GMRES- or CG-based strategies, and provides an octree-accelerated
matrix-vector product for linear-scaling runs.
"""

from .coeffs import CoeffVector, load_coeff_vector, save_coeff_vector
from .geometry import AssumptionReport, Configuration, Sphere, build_lattice, validate
from .harmonics import QuadratureRule, ShIndex, eval_real_sh, project_onto_sphere, quadrature_rule
from .hierarchical import FarFieldParams, Octree, build_tree, fmm_error_study
from .krylov import (
    LinearMap,
    SolveReport,
    cg,
    chebyshev_envelope,
    gmres,
    iteration_bound_gmres,
)
from .operators import (
    Discretization,
    TheoryConstants,
    compute_theory_constants,
    estimate_coercivity,
)
from .strategies import (
    StrategyResult,
    reference_solution,
    relative_error,
    solve_cg_strategy,
    solve_gmres_strategy,
)

__all__ = [
    "AssumptionReport", "Configuration", "Sphere", "build_lattice", "validate",
    "CoeffVector", "load_coeff_vector", "save_coeff_vector",
    "QuadratureRule", "ShIndex", "eval_real_sh", "project_onto_sphere", "quadrature_rule",
    "FarFieldParams", "Octree", "build_tree", "fmm_error_study",
    "LinearMap", "SolveReport", "cg", "chebyshev_envelope", "gmres", "iteration_bound_gmres",
    "Discretization", "TheoryConstants", "compute_theory_constants", "estimate_coercivity",
    "StrategyResult", "reference_solution", "relative_error",
    "solve_cg_strategy", "solve_gmres_strategy",
]

__version__ = "0.1.0"
