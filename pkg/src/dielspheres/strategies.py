"""End-to-end solution strategies for the induced surface charge.

Both strategies assemble the projected right-hand side, solve the reduced
linear system (GMRES on the modified operator, or CG on its symmetrised
similarity transform), and reconstruct the full-space induced charge from
the surface-potential solution.  Reference solutions at high degree are
cached on disk keyed by a configuration digest.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coeffs import EXPANSION, FULL, REDUCED, CoeffVector, load_coeff_vector, save_coeff_vector
from .geometry import Configuration
from .krylov import LinearMap, SolveReport, cg, gmres
from .operators import (
    Discretization,
    charge_norm,
    project_p0_perp,
    sigma_f_coeffs,
    truncate_q,
)

_CACHE_ENV = "DIELSPHERES_CACHE_DIR"


@dataclass
class StrategyResult:
    """Outcome of one solution strategy run."""

    nu: CoeffVector                 # induced surface charge, full space
    lam: CoeffVector                # surface potential unknown, reduced space
    report: SolveReport
    config: Configuration
    lmax: int
    solver: str
    relative_error_vs_reference: float | None = None
    theorem_normalised_error: float | None = None
    error_history: list = field(default_factory=list)
    outside_theory: bool = False    # mixed-sign fallback path was used


def _make_result(disc: Discretization, lam_flat: np.ndarray, report: SolveReport,
                 solver: str, **kw) -> StrategyResult:
    lam = CoeffVector(lam_flat, disc.lmax, disc.nspheres, REDUCED, EXPANSION)
    nu = disc.reconstruct_charge(lam_flat)
    return StrategyResult(nu=nu, lam=lam, report=report, config=disc.config,
                          lmax=disc.lmax, solver=solver, **kw)


def theorem_denominator(disc: Discretization, nu_true: CoeffVector) -> float:
    """Normaliser of the relative-error estimates.

    Dual norm of the mean-free part of the true discrete charge plus
    (4 pi/kappa0) times the dual norm of the mean-free projected free charge
    (zero for per-sphere-constant free charge).
    """
    r = disc.radii
    term1 = charge_norm(project_p0_perp(nu_true), r)
    sf = truncate_q(sigma_f_coeffs(disc.config, disc.lmax), disc.lmax)
    term2 = (4.0 * np.pi / disc.config.kappa0) * charge_norm(project_p0_perp(sf), r)
    return term1 + term2


def _error_tracker(disc: Discretization, truth: CoeffVector):
    """Per-iteration theorem-normalised error callback factory."""
    denom = theorem_denominator(disc, truth)
    truth_vals = truth.values
    history = []

    def on_iterate(_k, lam_k):
        nu_k = disc.reconstruct_charge(lam_k)
        err = charge_norm(CoeffVector(nu_k.values - truth_vals, disc.lmax,
                                      disc.nspheres, FULL, EXPANSION), disc.radii)
        history.append(err / denom)

    return on_iterate, history


def solve_gmres_strategy(config: Configuration, lmax: int, tol: float = 1e-10,
                         coupling=None, maxit: int | None = None,
                         disc: Discretization | None = None,
                         truth: CoeffVector | None = None) -> StrategyResult:
    """Induced surface charge via GMRES on the reduced system.

    With a truth charge supplied, the theorem-normalised error of every
    iterate is recorded in ``error_history``.  Mixed-sign configurations
    fall back to GMRES on the full-space adjoint system (outside the proved
    iteration theory; flagged on the result).
    """
    if disc is None:
        disc = Discretization(config, lmax, coupling=coupling)
    if disc.sign == "mixed":
        return _solve_adjoint_fallback(disc, tol, maxit)
    rhs = disc.rhs_reduced()
    amap = LinearMap(disc.size_reduced, disc.system_matvec)
    on_iter, history = (None, [])
    if truth is not None:
        on_iter, history = _error_tracker(disc, truth)
    lam, report = gmres(amap, rhs, tol=tol, maxit=maxit, on_iterate=on_iter)
    return _make_result(disc, lam, report, "gmres", error_history=history)


def solve_cg_strategy(config: Configuration, lmax: int, tol: float = 1e-10,
                      coupling=None, maxit: int | None = None,
                      disc: Discretization | None = None,
                      truth: CoeffVector | None = None) -> StrategyResult:
    """Induced surface charge via CG on the symmetrised system.

    Strictly requires a sign-uniform configuration (the symmetrising square
    root exists only then); the symmetric solution is mapped back through
    the inverse diagonal before reconstruction.
    """
    if disc is None:
        disc = Discretization(config, lmax, coupling=coupling)
    disc._require_sign_uniform("the CG strategy")
    dkh = disc.dkh_diag()
    rhs_sym = dkh * disc.rhs_reduced()
    amap = LinearMap(disc.size_reduced, disc.sym_matvec, symmetric=True)
    on_iter, history = (None, [])
    if truth is not None:
        inner, history = _error_tracker(disc, truth)

        def on_iter(k, y_k):  # noqa: E306 - map symmetric iterate back first
            inner(k, y_k / dkh)

    y, report = cg(amap, rhs_sym, tol=tol, maxit=maxit, on_iterate=on_iter)
    return _make_result(disc, y / dkh, report, "cg", error_history=history)


def _solve_adjoint_fallback(disc: Discretization, tol, maxit) -> StrategyResult:
    rhs = disc.rhs_adjoint_full()
    amap = LinearMap(disc.size_full, disc.adjoint_full_matvec)
    nu_flat, report = gmres(amap, rhs, tol=tol, maxit=maxit)
    nu = CoeffVector(nu_flat, disc.lmax, disc.nspheres, FULL, EXPANSION)
    # surface potential from the charge: lambda = V nu (expansion, mean-free part)
    pair = disc.v_pairings(nu.per_sphere())
    lam = (pair / disc._r2[:, None])[:, 1:].ravel()
    result = _make_result(disc, lam, report, "gmres-adjoint")
    result.nu = nu                  # keep the directly solved charge
    result.outside_theory = True
    return result


# ---------------------------------------------------------------------------
# reference solutions and error metrics
# ---------------------------------------------------------------------------

def cache_directory() -> Path:
    root = os.environ.get(_CACHE_ENV)
    path = Path(root) if root else Path.home() / ".cache" / "dielspheres"
    path.mkdir(parents=True, exist_ok=True)
    return path


def reference_solution(config: Configuration, lmax_ref: int = 20,
                       tol: float = 1e-13, coupling=None,
                       use_cache: bool = True,
                       max_unknowns: int = 400_000) -> StrategyResult:
    """High-accuracy discrete solution used as the error reference.

    Solved once per configuration digest and cached on disk (the reduced
    potential vector is stored; reconstruction is deterministic, so reloads
    are bit-identical).
    """
    n_unknowns = config.nspheres * ((lmax_ref + 1) ** 2 - 1)
    if n_unknowns > max_unknowns:
        raise ValueError(
            f"reference at lmax={lmax_ref} needs {n_unknowns} unknowns "
            f"(> {max_unknowns}); reduce the configuration or raise the guard")
    path = cache_directory() / (
        f"ref-{config.digest()[:24]}-L{lmax_ref}-t{tol:.0e}.bin")
    disc = Discretization(config, lmax_ref, coupling=coupling)
    if use_cache and path.exists():
        lam = load_coeff_vector(path)
        result = _make_result(disc, lam.values, SolveReport(iterations=0,
                              residual_history=[0.0], converged=True),
                              "cached")
        return result
    result = solve_gmres_strategy(config, lmax_ref, tol=tol, disc=disc)
    if use_cache:
        save_coeff_vector(path, result.lam)
    return result


def relative_error(approx: StrategyResult, reference: StrategyResult,
                   normalisation: str = "plain") -> float:
    """Dual-norm relative error of a strategy result against a reference.

    The reference is truncated to the approximation degree before
    comparison.  ``plain`` divides by the dual norm of the truncated
    reference; ``theorem`` uses the estimate normaliser (mean-free true
    charge plus projected free-charge term).
    """
    if approx.lmax > reference.lmax:
        raise ValueError("reference must be at least as resolved as the approximation")
    if approx.config.digest() != reference.config.digest():
        raise ValueError("results belong to different configurations")
    r = approx.config.radii
    ref_nu = truncate_q(reference.nu, approx.lmax)
    diff = CoeffVector(approx.nu.values - ref_nu.values, approx.lmax,
                       approx.nu.nspheres, FULL, EXPANSION)
    num = charge_norm(diff, r)
    if normalisation == "plain":
        denom = charge_norm(ref_nu, r)
    elif normalisation == "theorem":
        disc = Discretization(approx.config, approx.lmax)
        denom = theorem_denominator(disc, ref_nu)
    else:
        raise ValueError(f"unknown normalisation {normalisation!r}")
    if denom == 0.0:
        raise ValueError("error normaliser vanishes for this instance")
    return num / denom
