"""Self-contained GMRES and CG over abstract linear maps, plus iteration bounds.

Both solvers stop on the relative Euclidean residual ||b - A x|| / ||b||,
start from x0 = 0 unless told otherwise, and count only matvec-bearing
iterations (the initial residual of a zero start costs no matvec).
GMRES is full (non-restarted) Arnoldi with modified Gram-Schmidt and Givens
plane rotations updating the least-squares problem incrementally.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np


class IndefiniteOperatorError(RuntimeError):
    """CG detected negative curvature: the operator is not positive definite.

    For the symmetrised polarisation system this signals a violated
    prerequisite (the dielectric constants must all lie on one side of the
    background constant for the spectrum to be positive).
    """


@dataclass
class LinearMap:
    """A vector -> vector capability with a declared dimension and symmetry."""

    dim: int
    matvec: callable
    symmetric: bool = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matvec(x)


@dataclass
class SolveReport:
    """Iteration record of one linear solve."""

    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    bound_r_epsilon: int | None = None
    bound_s_epsilon: int | None = None


def gmres(amap: LinearMap, rhs: np.ndarray, tol: float = 1e-10,
          maxit: int | None = None, x0: np.ndarray | None = None,
          on_iterate=None):
    """Full GMRES.  Returns (solution, SolveReport).

    ``on_iterate(k, x_k)`` is invoked with the assembled iterate after every
    Arnoldi step (intended for error tracking; it costs an extra
    back-substitution per call but no matvec).
    """
    rhs = np.asarray(rhs, dtype=float)
    n = amap.dim
    if rhs.shape != (n,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({n},)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if maxit is None:
        maxit = n
    maxit = min(maxit, n)
    t0 = time.perf_counter()

    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
        return x, SolveReport(iterations=0, residual_history=[0.0],
                              converged=True, wall_time=time.perf_counter() - t0)
    if x0 is None:
        x0 = np.zeros(n)
        r0 = rhs.copy()
    else:
        x0 = np.asarray(x0, dtype=float)
        r0 = rhs - amap(x0)
    beta = np.linalg.norm(r0)
    history = [beta / bnorm]
    if history[0] <= tol:
        return x0.copy(), SolveReport(iterations=0, residual_history=history,
                                      converged=True,
                                      wall_time=time.perf_counter() - t0)

    v = np.empty((maxit + 1, n))
    v[0] = r0 / beta
    h = np.zeros((maxit + 1, maxit))
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)
    g = np.zeros(maxit + 1)
    g[0] = beta

    def assemble(k):
        y = np.linalg.solve(np.triu(h[:k, :k]), g[:k])
        return x0 + v[:k].T @ y

    converged = False
    k = 0
    for k in range(1, maxit + 1):
        w = amap(v[k - 1])
        for i in range(k):                      # modified Gram-Schmidt
            h[i, k - 1] = v[i] @ w
            w -= h[i, k - 1] * v[i]
        hnext = np.linalg.norm(w)
        for i in range(k - 1):                  # apply stored rotations
            tmp = cs[i] * h[i, k - 1] + sn[i] * h[i + 1, k - 1]
            h[i + 1, k - 1] = -sn[i] * h[i, k - 1] + cs[i] * h[i + 1, k - 1]
            h[i, k - 1] = tmp
        denom = np.hypot(h[k - 1, k - 1], hnext)
        if denom == 0.0:                        # fully degenerate column
            cs[k - 1], sn[k - 1] = 1.0, 0.0
        else:
            cs[k - 1] = h[k - 1, k - 1] / denom
            sn[k - 1] = hnext / denom
        h[k - 1, k - 1] = denom
        g[k] = -sn[k - 1] * g[k - 1]
        g[k - 1] = cs[k - 1] * g[k - 1]
        history.append(abs(g[k]) / bnorm)
        if on_iterate is not None:
            on_iterate(k, assemble(k))
        if history[-1] <= tol or hnext == 0.0:  # hnext == 0: happy breakdown
            converged = True
            break
        if k < maxit:
            v[k] = w / hnext
    x = assemble(k)
    return x, SolveReport(iterations=k, residual_history=history,
                          converged=converged or history[-1] <= tol,
                          wall_time=time.perf_counter() - t0)


def cg(amap: LinearMap, rhs: np.ndarray, tol: float = 1e-10,
       maxit: int | None = None, x0: np.ndarray | None = None,
       on_iterate=None):
    """Conjugate gradients for symmetric positive definite maps.

    Raises :class:`IndefiniteOperatorError` when negative curvature is
    encountered.  Returns (solution, SolveReport).
    """
    if not amap.symmetric:
        raise ValueError("cg requires a map flagged symmetric")
    rhs = np.asarray(rhs, dtype=float)
    n = amap.dim
    if rhs.shape != (n,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({n},)")
    if maxit is None:
        maxit = 10 * n
    t0 = time.perf_counter()

    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
        return x, SolveReport(iterations=0, residual_history=[0.0],
                              converged=True, wall_time=time.perf_counter() - t0)
    if x0 is None:
        x = np.zeros(n)
        r = rhs.copy()
    else:
        x = np.asarray(x0, dtype=float).copy()
        r = rhs - amap(x)
    history = [np.linalg.norm(r) / bnorm]
    if history[0] <= tol:
        return x, SolveReport(iterations=0, residual_history=history,
                              converged=True, wall_time=time.perf_counter() - t0)
    p = r.copy()
    rs = r @ r
    converged = False
    k = 0
    for k in range(1, maxit + 1):
        ap = amap(p)
        curv = p @ ap
        if curv <= 0:
            raise IndefiniteOperatorError(
                "negative curvature encountered: the operator is not positive "
                "definite (for the symmetrised polarisation system this means "
                "the sign-uniformity prerequisite is violated)")
        alpha = rs / curv
        x += alpha * p
        r -= alpha * ap
        rs_new = r @ r
        history.append(np.sqrt(rs_new) / bnorm)
        if on_iterate is not None:
            on_iterate(k, x.copy())
        if history[-1] <= tol:
            converged = True
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, SolveReport(iterations=k, residual_history=history,
                          converged=converged,
                          wall_time=time.perf_counter() - t0)


def chebyshev_envelope(kappa_bound: float, k: int) -> float:
    """Min-max polynomial envelope 2((sqrt(kb)-1)/(sqrt(kb)+1))^k on [1, kb]."""
    if kappa_bound < 1.0:
        raise ValueError("kappa_bound must be >= 1")
    root = np.sqrt(kappa_bound)
    return 2.0 * ((root - 1.0) / (root + 1.0)) ** k


def iteration_bound_gmres(constants, lmax: int, epsilon: float) -> int:
    """Iteration count guaranteeing a relative solution error below epsilon.

    ceil( log(eps~ / (lmax * prefactor)) / log(rho) ) with
    eps~ = epsilon / max_contrast and rho the Chebyshev contraction rate of
    the bound interval [alpha0, continuity bound]; independent of the number
    of spheres.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ratio = constants.c_a_tilde / constants.alpha0
    if ratio <= 1.0:
        return 1
    rho = (np.sqrt(ratio) - 1.0) / (np.sqrt(ratio) + 1.0)
    eps_eff = epsilon / constants.max_contrast
    arg = eps_eff / (lmax * constants.upsilon_gmres)
    if arg >= 1.0:
        return 1
    return int(np.ceil(np.log(arg) / np.log(rho)))
