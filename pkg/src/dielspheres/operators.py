"""Galerkin operator algebra for the sphere ensemble.

Everything acts on flat coefficient vectors in the (sphere, l, m) layout of
:mod:`dielspheres.coeffs`.  The single-layer pairing engine (dense blocks or
displacement-grouped products, octree far field via the hierarchical module)
produces L2 pairings from density expansion coefficients; the remaining
operators are diagonal in the per-sphere harmonic basis.

Linear systems solved downstream:

* reduced system (GMRES):  [r_i^2 I + pairings(V) diag(contrast l'/r_j)] c = b
  where c are expansion coefficients of the surface potential and b the
  projected right-hand side; this is exactly the reduced Galerkin problem.
* symmetrised system (CG): conjugating with the diagonal
  sqrt(|contrast| l/r) yields a symmetric positive definite matrix in the
  sign-uniform case; solutions map back by the inverse diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import (
    EXPANSION,
    FULL,
    PROJECTION,
    REDUCED,
    CoeffVector,
    block_size,
)
from .coupling import (
    GroupedTranslation,
    multipole_factors,
    projection_factors,
    self_factors,
    translation_block,
)
from .geometry import Configuration
from .harmonics import sh_dim


class SignUniformityError(ValueError):
    """Raised when an operation requires all kappa on one side of kappa0."""


@dataclass(frozen=True)
class DiagonalOperator:
    """Positive diagonal aligned with a coefficient-vector layout."""

    values: np.ndarray
    role: str

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.values * x


@dataclass(frozen=True)
class TheoryConstants:
    """Bounds entering the iteration-count estimates.

    ``c_equiv`` and ``c_v`` are inputs (norm-equivalence constant and
    single-layer coercivity); the rest are derived from the configuration.
    """

    c_a_tilde: float        # continuity bound, 1 + max|contrast| c_equiv/sqrt(c_v)
    beta_a_tilde: float     # inf-sup bound of the reduced operator
    alpha0: float           # lower bound on the symmetrised spectrum
    upsilon_gmres: float    # prefactor of the iteration estimate
    c_equiv: float
    c_v: float
    max_contrast: float


# ---------------------------------------------------------------------------
# small helpers on coefficient vectors
# ---------------------------------------------------------------------------

def flat_degrees(lmax: int, space: str) -> np.ndarray:
    degs = np.concatenate([np.full(2 * l + 1, l, dtype=float)
                           for l in range(lmax + 1)])
    return degs[1:] if space == REDUCED else degs


def sigma_f_coeffs(config: Configuration, lmax: int) -> CoeffVector:
    """Free-charge surface density as a coefficient vector.

    The total charge q_i is spread uniformly, sigma_f = q_i/(4 pi r_i^2),
    whose only nonzero expansion coefficient is q_i/(sqrt(4 pi) r_i^2) at
    l = 0.
    """
    vec = CoeffVector.zeros(lmax, config.nspheres, FULL, EXPANSION)
    vec.per_sphere()[:, 0] = config.charges / (np.sqrt(4 * np.pi) * config.radii ** 2)
    return vec


def apply_dtn(vec: CoeffVector, radii: np.ndarray) -> CoeffVector:
    """Interior Dirichlet-to-Neumann map: entry (i, l, m) scaled by l/r_i.

    Constants extend harmonically to constants, so l = 0 components map to
    zero in the full space.
    """
    if vec.rep != EXPANSION:
        raise ValueError("DtN acts on expansion coefficients")
    degs = flat_degrees(vec.lmax, vec.space)
    vals = vec.per_sphere() * (degs[None, :] / np.asarray(radii)[:, None])
    return CoeffVector(vals.ravel(), vec.lmax, vec.nspheres, vec.space, EXPANSION)


def project_p0(vec: CoeffVector) -> CoeffVector:
    """Keep only the per-sphere mean (l = 0) components."""
    out = vec.copy()
    if vec.space == REDUCED:
        out.values[:] = 0.0
        return out
    out.per_sphere()[:, 1:] = 0.0
    return out


def project_p0_perp(vec: CoeffVector) -> CoeffVector:
    """Zero the per-sphere mean (l = 0) components."""
    out = vec.copy()
    if vec.space == FULL:
        out.per_sphere()[:, 0] = 0.0
    return out


def truncate_q(vec: CoeffVector, lmax: int) -> CoeffVector:
    """Orthogonal projection onto degrees <= lmax (identity if already lower)."""
    if lmax >= vec.lmax:
        return vec.copy()
    return vec.truncated(lmax)


def potential_norm(vec: CoeffVector, radii: np.ndarray) -> float:
    """Norm of a surface potential: ||P0 u||_L2^2 + <DtN u, u>.

    In expansion coefficients the weights are r^2 at l = 0 and l*r for
    l >= 1; on the discrete space this coincides with the approximation
    space inner-product norm.
    """
    if vec.rep != EXPANSION:
        raise ValueError("norms act on expansion coefficients")
    radii = np.asarray(radii, dtype=float)
    degs = flat_degrees(vec.lmax, vec.space)
    w = np.where(degs[None, :] == 0, radii[:, None] ** 2,
                 degs[None, :] * radii[:, None])
    return float(np.sqrt(np.sum(w * vec.per_sphere() ** 2)))


def charge_norm(vec: CoeffVector, radii: np.ndarray) -> float:
    """Dual norm of a surface density (entrywise inverse weights).

    Weights in expansion coefficients: r^2 at l = 0 and r^3/l for l >= 1.
    """
    if vec.rep != EXPANSION:
        raise ValueError("norms act on expansion coefficients")
    radii = np.asarray(radii, dtype=float)
    degs = flat_degrees(vec.lmax, vec.space)
    w = np.where(degs[None, :] == 0, radii[:, None] ** 2,
                 radii[:, None] ** 3 / np.maximum(degs[None, :], 1.0))
    return float(np.sqrt(np.sum(w * vec.per_sphere() ** 2)))


def charge_norm_pairings(values: np.ndarray, radii: np.ndarray, lmax: int,
                         space: str) -> float:
    """Dual norm of a functional given by its pairings (f, y^i_lm).

    sup over the discrete space of <f, psi>/|||psi|||, i.e. the root of
    sum p^2 / w with the potential-norm weights w.
    """
    radii = np.asarray(radii, dtype=float)
    degs = flat_degrees(lmax, space)
    n = len(radii)
    p = np.asarray(values, dtype=float).reshape(n, -1)
    w = np.where(degs[None, :] == 0, radii[:, None] ** 2,
                 degs[None, :] * radii[:, None])
    return float(np.sqrt(np.sum(p ** 2 / w)))


# ---------------------------------------------------------------------------
# the discretised problem
# ---------------------------------------------------------------------------

class DirectCoupling:
    """All-pairs single-layer coupling, grouped by displacement."""

    def __init__(self, config: Configuration, lmax: int, cache_bytes=None):
        n = config.nspheres
        self.nspheres = n
        self.lmax = lmax
        if n > 1:
            idx = np.arange(n)
            tt, ss = [a.ravel() for a in np.meshgrid(idx, idx, indexing="ij")]
            off = tt != ss
            tt, ss = tt[off], ss[off]
            disp = config.centers[tt] - config.centers[ss]
            kwargs = {} if cache_bytes is None else {"cache_bytes": cache_bytes}
            self._engine = GroupedTranslation("m2l", disp, tt, ss, lmax, lmax,
                                              n, n, **kwargs)
        else:
            self._engine = None

    def apply(self, multipoles: np.ndarray) -> np.ndarray:
        """Local expansions at every sphere center from all other spheres."""
        if self._engine is None:
            return np.zeros_like(multipoles)
        return self._engine.apply(multipoles)


class Discretization:
    """Spherical-harmonic Galerkin discretisation of the polarisation problem.

    Owns the diagonal factors and a coupling engine (direct by default; a
    tree-based engine from :mod:`dielspheres.hierarchical` may be passed to
    accelerate the off-diagonal single-layer action).  Immutable after
    construction; all ``*_matvec``/``apply`` methods are pure.
    """

    def __init__(self, config: Configuration, lmax: int, coupling=None,
                 cache_bytes=None):
        if lmax < 1:
            raise ValueError("lmax must be >= 1")
        self.config = config
        self.lmax = lmax
        self.nspheres = config.nspheres
        self.dim_full = sh_dim(lmax)
        self.block_reduced = block_size(lmax, REDUCED)
        self.size_reduced = self.nspheres * self.block_reduced
        self.size_full = self.nspheres * self.dim_full

        r = config.radii
        self.radii = r
        self.contrast = config.contrast
        self.sign = config.sign_uniform()
        degs = flat_degrees(lmax, FULL)
        self._mult = multipole_factors(r, lmax)
        self._proj = projection_factors(r, lmax)
        self._self = self_factors(r, lmax)
        self._r2 = r ** 2
        self._dtn_full = degs[None, :] / r[:, None]          # l/r_i, 0 at l=0
        self._dtn_kappa = np.abs(self.contrast)[:, None] * self._dtn_full
        self._dtn_kappa_signed = self.contrast[:, None] * self._dtn_full
        with np.errstate(invalid="ignore"):
            self._dkh = np.sqrt(self._dtn_kappa)
        self.coupling = coupling if coupling is not None else DirectCoupling(
            config, lmax, cache_bytes)

    # -- raw array plumbing -------------------------------------------------

    def _as_full_2d(self, flat: np.ndarray, space: str) -> np.ndarray:
        if space == FULL:
            return flat.reshape(self.nspheres, self.dim_full)
        out = np.zeros((self.nspheres, self.dim_full))
        out[:, 1:] = flat.reshape(self.nspheres, self.block_reduced)
        return out

    def v_pairings(self, coeffs_full: np.ndarray) -> np.ndarray:
        """Single-layer L2 pairings from full-space expansion coefficients.

        Input and output have shape (nspheres, (lmax+1)^2); the self block
        is the exact diagonal r^3/(2l+1), cross blocks go through the
        coupling engine.
        """
        loc = self.coupling.apply(self._mult * coeffs_full)
        return self._proj * loc + self._self * coeffs_full

    # -- spec-level operator applications -----------------------------------

    def apply_v(self, vec: CoeffVector) -> CoeffVector:
        """Single-layer operator; returns pairings (projection representation)."""
        if vec.rep != EXPANSION:
            raise ValueError("apply_v expects expansion coefficients")
        pair_full = self.v_pairings(self._as_full_2d(vec.values, vec.space))
        if vec.space == REDUCED:
            pair = pair_full[:, 1:].ravel()
        else:
            pair = pair_full.ravel()
        return CoeffVector(pair, self.lmax, self.nspheres, vec.space, PROJECTION)

    def apply_system(self, vec: CoeffVector) -> CoeffVector:
        """Reduced modified operator (identity plus single-layer composed
        with the contrast-scaled DtN); pairing-representation output."""
        if vec.space != REDUCED or vec.rep != EXPANSION:
            raise ValueError("apply_system expects reduced expansion coefficients")
        self._require_sign_uniform("the reduced operator")
        out = self.system_matvec(vec.values)
        return CoeffVector(out, self.lmax, self.nspheres, REDUCED, PROJECTION)

    def apply_system_sym(self, vec: CoeffVector) -> CoeffVector:
        """Symmetrised reduced operator; pairing-representation output."""
        if vec.space != REDUCED or vec.rep != EXPANSION:
            raise ValueError("apply_system_sym expects reduced expansion coefficients")
        out = self.sym_matvec(vec.values)
        return CoeffVector(out, self.lmax, self.nspheres, REDUCED, PROJECTION)

    def apply_adjoint_full(self, vec: CoeffVector) -> CoeffVector:
        """Full-space adjoint operator, as pairings against the basis."""
        if vec.space != FULL or vec.rep != EXPANSION:
            raise ValueError("apply_adjoint_full expects full-space expansion coefficients")
        return CoeffVector(self.adjoint_full_matvec(vec.values), self.lmax,
                           self.nspheres, FULL, PROJECTION)

    # -- flat matvecs used by the solvers ------------------------------------

    def system_matvec(self, x: np.ndarray) -> np.ndarray:
        c = self._as_full_2d(x, REDUCED)
        p = self.v_pairings(self._dtn_kappa_signed * c)
        out = self._r2[:, None] * c[:, 1:].reshape(self.nspheres, -1)
        return (out + p[:, 1:]).ravel()

    def sym_matvec(self, x: np.ndarray) -> np.ndarray:
        self._require_sign_uniform("the symmetrised operator")
        s = 1.0 if self.sign == "above" else -1.0
        c = self._as_full_2d(x, REDUCED)
        p = self.v_pairings(self._dkh * c)
        out = self._r2[:, None] * c[:, 1:] + s * (self._dkh * p)[:, 1:]
        return out.ravel()

    def adjoint_full_matvec(self, x: np.ndarray) -> np.ndarray:
        c = x.reshape(self.nspheres, self.dim_full)
        p = self.v_pairings(c)
        out = self._r2[:, None] * c + self.contrast[:, None] * self._dtn_full * p
        return out.ravel()

    def _require_sign_uniform(self, what: str):
        if self.sign == "mixed":
            raise SignUniformityError(
                f"{what} requires all dielectric constants on one side of "
                f"kappa0; this configuration mixes both signs")

    # -- right-hand sides and reconstruction ---------------------------------

    def rhs_reduced(self) -> np.ndarray:
        """Projected right-hand side (4 pi/kappa0)(V sigma_f, y^i_lm), l >= 1."""
        sf = sigma_f_coeffs(self.config, self.lmax)
        pair = self.v_pairings(sf.per_sphere())
        return (4.0 * np.pi / self.config.kappa0) * pair[:, 1:].ravel()

    def rhs_adjoint_full(self) -> np.ndarray:
        """Pairings (4 pi/kappa0)(sigma_f, y^i_lm) of the full-space problem."""
        sf = sigma_f_coeffs(self.config, self.lmax)
        return (4.0 * np.pi / self.config.kappa0) * (
            self._r2[:, None] * sf.per_sphere()).ravel()

    def reconstruct_charge(self, lam_reduced: np.ndarray) -> CoeffVector:
        """Induced surface charge from the reduced potential solution.

        nu = -contrast * DtN(lambda) + (4 pi/kappa0) * projected sigma_f,
        evaluated exactly in expansion coefficients (l = 0 comes only from
        the free charge).
        """
        lam = lam_reduced.reshape(self.nspheres, self.block_reduced)
        out = np.zeros((self.nspheres, self.dim_full))
        out[:, 1:] = -self.contrast[:, None] * self._dtn_full[:, 1:] * lam
        sf = sigma_f_coeffs(self.config, self.lmax)
        out += (4.0 * np.pi / self.config.kappa0) * sf.per_sphere()
        return CoeffVector(out.ravel(), self.lmax, self.nspheres, FULL, EXPANSION)

    def galerkin_residual(self, nu: CoeffVector) -> float:
        """Dual norm of the full-space Galerkin residual of a candidate charge."""
        pair = self.adjoint_full_matvec(nu.to_expansion(self.radii).values)
        res = pair - self.rhs_adjoint_full()
        return charge_norm_pairings(res, self.radii, self.lmax, FULL)

    # -- symmetrised-system scalings -----------------------------------------

    def dkh_diag(self) -> np.ndarray:
        """Reduced diagonal sqrt(|contrast| l / r) conjugating the system."""
        self._require_sign_uniform("the symmetrising square root")
        return self._dkh[:, 1:].ravel()

    def dtn_kappa_matrix_diag(self) -> np.ndarray:
        """Reduced diagonal |contrast|^(1/2) r^2 sqrt(l/r) (pairing matrix
        of the square-root operator against the basis)."""
        self._require_sign_uniform("the symmetrising square root")
        return (self._r2[:, None] * self._dkh)[:, 1:].ravel()

    # -- dense assemblies (test oracles and small-problem paths) -------------

    def dense_v(self, space: str = REDUCED, method: str = "analytic",
                quad_order=None) -> np.ndarray:
        """Dense matrix of single-layer pairings (V y^j_l'm', y^i_lm)."""
        n, cfg = self.nspheres, self.config
        bs = block_size(self.lmax, space)
        lo = 1 if space == REDUCED else 0
        mat = np.zeros((n * bs, n * bs))
        for i in range(n):
            rows = slice(i * bs, (i + 1) * bs)
            mat[rows, rows] = np.diag(self._self[i, lo:])
            for j in range(n):
                if i == j:
                    continue
                cols = slice(j * bs, (j + 1) * bs)
                blk = translation_block(cfg.spheres[j], cfg.spheres[i],
                                        self.lmax, method=method,
                                        quad_order=quad_order).entries
                mat[rows, cols] = blk[lo:, lo:]
        return mat

    def dense_system(self, method: str = "analytic") -> np.ndarray:
        """Dense reduced system matrix (pairings of the modified operator)."""
        gv = self.dense_v(REDUCED, method=method)
        dk2 = self._dtn_kappa_signed[:, 1:].ravel()
        a = gv * dk2[None, :]
        a[np.diag_indices_from(a)] += np.repeat(self._r2, self.block_reduced)
        return a

    def dense_system_sym(self, method: str = "analytic") -> np.ndarray:
        """Dense symmetrised system matrix."""
        self._require_sign_uniform("the symmetrised operator")
        s = 1.0 if self.sign == "above" else -1.0
        gv = self.dense_v(REDUCED, method=method)
        dkh = self._dkh[:, 1:].ravel()
        a = s * dkh[:, None] * gv * dkh[None, :]
        a[np.diag_indices_from(a)] += np.repeat(self._r2, self.block_reduced)
        return a

    def dense_adjoint_full(self, method: str = "analytic") -> np.ndarray:
        """Dense full-space matrix of adjoint-operator pairings."""
        gv = self.dense_v(FULL, method=method)
        dfac = (self.contrast[:, None] * self._dtn_full).ravel()
        a = dfac[:, None] * gv
        a[np.diag_indices_from(a)] += np.repeat(self._r2, self.dim_full)
        return a

    def gram_diag(self, space: str = REDUCED) -> np.ndarray:
        """Diagonal of the basis Gram matrix (r_i^2 per entry)."""
        bs = block_size(self.lmax, space)
        return np.repeat(self._r2, bs)


# ---------------------------------------------------------------------------
# theory constants
# ---------------------------------------------------------------------------

def estimate_coercivity(config: Configuration, lmax: int,
                        disc: Discretization | None = None,
                        dense_cutoff: int = 2400, tol: float = 1e-8) -> float:
    """Numeric stand-in for the single-layer coercivity constant.

    Smallest Rayleigh quotient <x, V x> / (dual norm of x)^2 over the
    reduced discrete space: the minimal eigenvalue of the dual-norm-weighted
    single-layer pairing matrix.  Dense for small problems, Lanczos on the
    matrix-free operator otherwise.
    """
    if disc is None:
        disc = Discretization(config, lmax)
    degs = flat_degrees(lmax, REDUCED)
    w = (config.radii[:, None] ** 3 / degs[None, :]).ravel()
    wisqrt = 1.0 / np.sqrt(w)

    if disc.size_reduced <= dense_cutoff:
        gv = disc.dense_v(REDUCED)
        s = wisqrt[:, None] * gv * wisqrt[None, :]
        return float(np.linalg.eigvalsh(s)[0])

    from scipy.sparse.linalg import LinearOperator, eigsh

    def matvec(x):
        c = disc._as_full_2d(wisqrt * x, REDUCED)
        return wisqrt * disc.v_pairings(c)[:, 1:].ravel()

    op = LinearOperator((disc.size_reduced,) * 2, matvec=matvec)
    vals = eigsh(op, k=1, which="SA", tol=tol,
                 maxiter=5000, return_eigenvectors=False)
    return float(vals[0])


def compute_theory_constants(config: Configuration, c_equiv: float = 1.0,
                             c_v: float | None = None,
                             lmax: int | None = None) -> TheoryConstants:
    """Continuity/inf-sup/spectral bounds and the iteration-estimate prefactor.

    ``c_v`` may be supplied; otherwise it is estimated numerically at the
    given lmax.  Mixed-sign configurations have no spectral lower bound and
    are rejected.
    """
    sign = config.sign_uniform()
    if sign == "mixed":
        raise SignUniformityError(
            "spectral bounds require all dielectric constants on one side of kappa0")
    if c_v is None:
        if lmax is None:
            raise ValueError("either c_v or lmax must be provided")
        c_v = estimate_coercivity(config, lmax)
    contrast = config.contrast
    max_contrast = float(np.max(np.abs(contrast)))
    c_a = 1.0 + max_contrast * c_equiv / np.sqrt(c_v)
    candidates = []
    above = contrast > 0
    if np.any(above):
        candidates.append(np.min(contrast[above]))
    below = contrast < 0
    if np.any(below):
        ratio = config.kappas / config.kappa0
        candidates.append(np.min(ratio[below] * (-contrast[below])))
    beta = float(min(candidates) / max_contrast)
    alpha0 = 1.0 if sign == "above" else float(np.min(config.kappas) / config.kappa0)
    dk_abs = np.abs(config.kappas - config.kappa0)
    r = config.radii
    upsilon = (2.0 * c_a / beta
               * (r.max() ** 3 / r.min() ** 3)
               * np.sqrt(dk_abs.max() / dk_abs.min())
               * float(np.max(config.kappa0 / dk_abs)))
    return TheoryConstants(c_a_tilde=float(c_a), beta_a_tilde=beta,
                           alpha0=alpha0, upsilon_gmres=float(upsilon),
                           c_equiv=float(c_equiv), c_v=float(c_v),
                           max_contrast=max_contrast)
