"""Real spherical harmonics, quadrature on spheres, and surface projections.

Conventions
-----------
We use real-valued, L2(S^2)-orthonormal spherical harmonics ``y_lm`` without
the Condon-Shortley phase.  The sign and normalisation are pinned by the
closed forms for l <= 2 (with ``(x, y, z)`` a unit vector):

    y_00            = 0.28209479177387814                  # 1/sqrt(4 pi)
    y_1,-1; y_10; y_11 = 0.4886025119029199 * (y; z; x)    # sqrt(3/4pi)
    y_2,-2          = 1.0925484305920792 * x*y
    y_2,-1          = 1.0925484305920792 * y*z
    y_20            = 0.31539156525252005 * (3*z*z - 1)
    y_21            = 1.0925484305920792 * x*z
    y_22            = 0.5462742152960396  * (x*x - y*y)

Degrees are supported up to ``LMAX_SUPPORTED`` (far beyond the experiment
range); the associated Legendre functions are evaluated with the standard
stable upward recurrence in l applied to the fully normalised functions.

Coefficient vectors over a single sphere are indexed flat by
``idx = l*(l+1) + m`` (so block l occupies ``l*l .. (l+1)*(l+1)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LMAX_SUPPORTED = 64

_UNIT_TOL = 1e-8


@dataclass(frozen=True)
class ShIndex:
    """Degree/order pair of a spherical harmonic."""

    l: int
    m: int

    def __post_init__(self):
        if self.l < 0 or abs(self.m) > self.l:
            raise ValueError(f"invalid harmonic index (l={self.l}, m={self.m})")

    @property
    def flat(self) -> int:
        return self.l * (self.l + 1) + self.m


def sh_dim(lmax: int) -> int:
    """Number of harmonics with degree <= lmax."""
    return (lmax + 1) ** 2


def sh_flat_index(l, m):
    """Flat index of (l, m) in the degree-major layout."""
    return l * (l + 1) + m


def sh_degrees(lmax: int) -> np.ndarray:
    """Degree l of every flat index below ``sh_dim(lmax)``."""
    out = np.empty(sh_dim(lmax), dtype=np.int64)
    for l in range(lmax + 1):
        out[l * l:(l + 1) * (l + 1)] = l
    return out


def sh_orders(lmax: int) -> np.ndarray:
    """Order m of every flat index below ``sh_dim(lmax)``."""
    out = np.empty(sh_dim(lmax), dtype=np.int64)
    for l in range(lmax + 1):
        out[l * l:(l + 1) * (l + 1)] = np.arange(-l, l + 1)
    return out


def _normalized_plm(lmax: int, x: np.ndarray) -> np.ndarray:
    """Fully normalised associated Legendre functions Pbar_lm(x), m >= 0.

    Normalised so that y_l0 = Pbar_l0 and y_lm = sqrt(2)*Pbar_lm*cos(m phi)
    for m > 0 are L2(S^2)-orthonormal.  Returns shape (npts, lmax+1, lmax+1)
    with axis 1 = l and axis 2 = m (entries with m > l are zero).
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    p = np.zeros(x.shape + (lmax + 1, lmax + 1))
    p[..., 0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    # diagonal  Pbar_mm and first off-diagonal Pbar_{m+1,m}
    for m in range(1, lmax + 1):
        p[..., m, m] = np.sqrt((2 * m + 1) / (2.0 * m)) * s * p[..., m - 1, m - 1]
    for m in range(0, lmax):
        p[..., m + 1, m] = np.sqrt(2 * m + 3.0) * x * p[..., m, m]
    # upward recurrence in l for fixed m
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[..., l, m] = a * (x * p[..., l - 1, m] - b * p[..., l - 2, m])
    return p


def real_sh_table(lmax: int, units: np.ndarray) -> np.ndarray:
    """Evaluate all real harmonics with degree <= lmax at unit vectors.

    Parameters
    ----------
    lmax : int
    units : (npts, 3) array of unit vectors.

    Returns
    -------
    (npts, (lmax+1)**2) array; column ``sh_flat_index(l, m)`` holds y_lm.
    """
    if lmax > LMAX_SUPPORTED:
        raise ValueError(f"lmax={lmax} exceeds supported maximum {LMAX_SUPPORTED}")
    units = np.atleast_2d(np.asarray(units, dtype=float))
    ct = np.clip(units[:, 2], -1.0, 1.0)
    phi = np.arctan2(units[:, 1], units[:, 0])
    p = _normalized_plm(lmax, ct)
    out = np.empty((units.shape[0], sh_dim(lmax)))
    sqrt2 = np.sqrt(2.0)
    for l in range(lmax + 1):
        out[:, sh_flat_index(l, 0)] = p[:, l, 0]
        for m in range(1, l + 1):
            cm = np.cos(m * phi)
            sm = np.sin(m * phi)
            out[:, sh_flat_index(l, m)] = sqrt2 * p[:, l, m] * cm
            out[:, sh_flat_index(l, -m)] = sqrt2 * p[:, l, m] * sm
    return out


def eval_real_sh(idx: ShIndex, u) -> float:
    """Evaluate the real orthonormal harmonic y_lm at a unit vector.

    Raises a ValueError if ``|u|`` deviates from 1 by more than 1e-8.
    """
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValueError(f"argument must be a unit vector, got |u| = {norm!r}")
    table = real_sh_table(idx.l, u / norm)
    return float(table[0, idx.flat])


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature nodes/weights on the unit sphere (weights sum to 4 pi)."""

    nodes: np.ndarray    # (n, 3) unit vectors
    weights: np.ndarray  # (n,)
    order: int           # exact for spherical polynomials up to this degree

    def __post_init__(self):
        if self.nodes.shape[0] != self.weights.shape[0]:
            raise ValueError("nodes/weights length mismatch")


def quadrature_rule(order: int) -> QuadratureRule:
    """Tensor Gauss-Legendre (polar) x uniform (azimuth) rule on S^2.

    Exact for every spherical polynomial of degree <= ``order``; in
    particular it integrates products y_lm * y_l'm' exactly whenever
    l + l' <= order.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    n_theta = (order + 2) // 2          # Gauss: n points exact to degree 2n-1
    n_phi = order + 1                   # trapezoid: exact for modes |m| < n_phi
    xg, wg = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    wphi = 2.0 * np.pi / n_phi
    ct = np.repeat(xg, n_phi)
    st = np.sqrt(1.0 - ct * ct)
    ph = np.tile(phi, n_theta)
    nodes = np.column_stack([st * np.cos(ph), st * np.sin(ph), ct])
    weights = np.repeat(wg, n_phi) * wphi
    return QuadratureRule(nodes=nodes, weights=weights, order=order)


def project_onto_sphere(f, center, radius: float, lmax: int,
                        rule: QuadratureRule | None = None) -> np.ndarray:
    """L2 projections (f, y_lm)_{L2(sphere)} of a field over a sphere surface.

    ``f`` is called with an (n, 3) array of surface points and must return n
    values.  The surface Jacobian r^2 is included, i.e. projecting y_lm on a
    radius-r sphere returns r^2 at (l, m).
    """
    if rule is None:
        rule = quadrature_rule(2 * lmax + 12)
    center = np.asarray(center, dtype=float)
    pts = center + radius * rule.nodes
    vals = np.asarray(f(pts), dtype=float)
    table = real_sh_table(lmax, rule.nodes)
    return radius ** 2 * (table.T @ (rule.weights * vals))
