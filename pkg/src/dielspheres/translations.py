"""Solid harmonics and multipole/local translation operators.

This is the single code path used both for dense sphere-to-sphere coupling
blocks and for the octree far field.

Conventions
-----------
Real solid harmonics are scaled so the Coulomb kernel splits as a plain
bilinear sum:

    regular    Rhat_lm(x) = sqrt(4 pi / (2l+1)) * |x|^l     * y_lm(x/|x|)
    irregular  Shat_lm(x) = sqrt(4 pi / (2l+1)) * |x|^-(l+1) * y_lm(x/|x|)

    1/|x - y| = sum_{l,m} Rhat_lm(y) Shat_lm(x)      for |y| < |x|.

A *multipole* expansion about c with real coefficients M represents the
potential  Phi(x) = sum M_lm Shat_lm(x - c)  (valid far from c); a *local*
expansion with coefficients L represents  Phi(x) = sum L_lm Rhat_lm(x - c)
(valid near c).  The translation operators below are dense matrices acting
on flat (l, m)-indexed coefficient vectors:

    m2m(t, ...):  multipole about c1 -> multipole about c2,  t = c1 - c2
    m2l(d, ...):  multipole about c1 -> local about c2,      d = c2 - c1
    l2l(s, ...):  local about c1 -> local about c2,          s = c2 - c1

Internally the operators are assembled from the classical addition theorems
for Racah-normalised complex solid harmonics and conjugated to the real
basis with the per-degree unitary change of basis; the results are exactly
real.  m2m and l2l are exact on truncated expansions; m2l of a truncated
multipole is exact entry-by-entry (each entry is a single closed-form term),
the only approximation being the truncation degrees themselves.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np

from .harmonics import real_sh_table, sh_dim, sh_flat_index


def regular_solid_table(lmax: int, points: np.ndarray) -> np.ndarray:
    """Rhat_lm at each point, shape (npts, (lmax+1)**2)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(points, axis=1)
    out = np.zeros((points.shape[0], sh_dim(lmax)))
    safe = r > 0
    if np.any(safe):
        units = points[safe] / r[safe, None]
        table = real_sh_table(lmax, units)
        for l in range(lmax + 1):
            scale = np.sqrt(4.0 * np.pi / (2 * l + 1)) * r[safe] ** l
            cols = slice(l * l, (l + 1) * (l + 1))
            out[safe, cols] = table[:, cols] * scale[:, None]
    out[~safe, 0] = 1.0  # Rhat_00 = 1 everywhere, higher degrees vanish at 0
    return out


def irregular_solid_table(lmax: int, points: np.ndarray) -> np.ndarray:
    """Shat_lm at each (nonzero) point, shape (npts, (lmax+1)**2)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(points, axis=1)
    if np.any(r == 0):
        raise ValueError("irregular solid harmonics are singular at the origin")
    units = points / r[:, None]
    table = real_sh_table(lmax, units)
    out = np.empty_like(table)
    for l in range(lmax + 1):
        scale = np.sqrt(4.0 * np.pi / (2 * l + 1)) * r ** -(l + 1)
        cols = slice(l * l, (l + 1) * (l + 1))
        out[:, cols] = table[:, cols] * scale[:, None]
    return out


# ---------------------------------------------------------------------------
# real <-> complex change of basis
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _real_to_complex(lmax: int) -> np.ndarray:
    """Unitary U with  a = U c : real coefficients -> complex coefficients.

    If  f = sum_m c_m y_lm = sum_m a_m Y_l^m  (complex orthonormal
    Condon-Shortley harmonics), then per degree
        a_0      = c_0
        a_m      = (-1)^m (c_m - i c_{-m}) / sqrt(2)     (m > 0)
        a_{-m}   =        (c_m + i c_{-m}) / sqrt(2).
    """
    dim = sh_dim(lmax)
    u = np.zeros((dim, dim), dtype=complex)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for l in range(lmax + 1):
        u[sh_flat_index(l, 0), sh_flat_index(l, 0)] = 1.0
        for m in range(1, l + 1):
            ip, im = sh_flat_index(l, m), sh_flat_index(l, -m)
            sgn = (-1.0) ** m
            u[ip, ip] = sgn * inv_sqrt2
            u[ip, im] = -1j * sgn * inv_sqrt2
            u[im, ip] = inv_sqrt2
            u[im, im] = 1j * inv_sqrt2
    return u


@lru_cache(maxsize=64)
def _conj_flip(lmax: int) -> np.ndarray:
    """J with (J v)_{l,m} = (-1)^m v_{l,-m}; real symmetric involution."""
    dim = sh_dim(lmax)
    j = np.zeros((dim, dim))
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            j[sh_flat_index(l, m), sh_flat_index(l, -m)] = (-1.0) ** m
    return j


@lru_cache(maxsize=64)
def _vector_maps(lmax: int):
    """Index/sign arrays for fast vectorised real<->complex conversion.

    real multipole mhat -> complex m:  m = S1*mhat[I1] + 1j*S2*mhat[I2]
    complex local L -> real local:     lam = real(T1*L[K1] + T2*L[K2])
    """
    dim = sh_dim(lmax)
    i1 = np.zeros(dim, dtype=np.int64)
    i2 = np.zeros(dim, dtype=np.int64)
    s1 = np.zeros(dim)
    s2 = np.zeros(dim)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for l in range(lmax + 1):
        q0 = sh_flat_index(l, 0)
        i1[q0] = i2[q0] = q0
        s1[q0], s2[q0] = 1.0, 0.0
        for m in range(1, l + 1):
            qp, qm = sh_flat_index(l, m), sh_flat_index(l, -m)
            sgn = (-1.0) ** m
            i1[qp], i2[qp] = qp, qm
            s1[qp], s2[qp] = sgn * inv_sqrt2, -sgn * inv_sqrt2
            i1[qm], i2[qm] = qp, qm
            s1[qm], s2[qm] = inv_sqrt2, inv_sqrt2
    # local conversion: lam = U^H J L, i.e. lam_q = sum_p conj(U[p,q]) (JL)_p
    k1 = np.zeros(dim, dtype=np.int64)
    k2 = np.zeros(dim, dtype=np.int64)
    t1 = np.zeros(dim, dtype=complex)
    t2 = np.zeros(dim, dtype=complex)
    for l in range(lmax + 1):
        q0 = sh_flat_index(l, 0)
        k1[q0] = k2[q0] = q0
        t1[q0], t2[q0] = 1.0, 0.0
        for m in range(1, l + 1):
            qp, qm = sh_flat_index(l, m), sh_flat_index(l, -m)
            sgn = (-1.0) ** m
            # lam_{+m} = (sgn (JL)_{+m} + (JL)_{-m})/sqrt2, (JL)_p = (-1)^p L_{-p}
            k1[qp], k2[qp] = qm, qp
            t1[qp] = sgn * sgn * inv_sqrt2      # sgn * (-1)^m L_{-m}... = L_{-m}
            t2[qp] = sgn * inv_sqrt2
            # lam_{-m} = (sgn (JL)_{+m} - (JL)_{-m}) * (+1j)/sqrt2
            k1[qm], k2[qm] = qm, qp
            t1[qm] = 1j * sgn * sgn * inv_sqrt2
            t2[qm] = -1j * sgn * inv_sqrt2
    return i1, s1, i2, s2, k1, t1, k2, t2


def real_multipole_to_complex(mhat: np.ndarray, lmax: int) -> np.ndarray:
    """Convert real multipole coefficients to the complex basis (last axis)."""
    i1, s1, i2, s2, *_ = _vector_maps(lmax)
    mh = np.asarray(mhat)
    return s1 * mh[..., i1] + 1j * (s2 * mh[..., i2])


def complex_local_to_real(loc: np.ndarray, lmax: int) -> np.ndarray:
    """Convert complex local coefficients back to the real basis (last axis)."""
    _, _, _, _, k1, t1, k2, t2 = _vector_maps(lmax)
    lc = np.asarray(loc)
    return (t1 * lc[..., k1] + t2 * lc[..., k2]).real


# ---------------------------------------------------------------------------
# translation coefficient tables (geometry independent)
# ---------------------------------------------------------------------------

def _sqrt_binom(l, m, lam, mu) -> float:
    """sqrt((l+m)!(l-m)! / ((lam+mu)!(lam-mu)!(l-lam+m-mu)!(l-lam-m+mu)!)).

    Exact-integer arithmetic before the square root; zero when the residual
    degree cannot carry the residual order.
    """
    lr, mr = l - lam, m - mu
    if lr < 0 or abs(mr) > lr or abs(mu) > lam:
        return 0.0
    num = factorial(l + m) * factorial(l - m)
    den = (factorial(lam + mu) * factorial(lam - mu)
           * factorial(lr + mr) * factorial(lr - mr))
    # exact big-int ratio; Python's int/int true division is correctly rounded
    return float(np.sqrt(num / den))


@lru_cache(maxsize=32)
def _m2l_tables(lmax_t: int, lmax_s: int):
    """Coefficient matrix B and flat S-value index map for m2l.

    T_complex[(j,k),(l,m)] = B[(j,k),(l,m)] * Svals[ IDX[(j,k),(l,m)] ]
    with  B = (-1)^j sqrt-binom(l+j, m+k; l, m)  and  IDX the flat index of
    degree l+j, order m+k.  Svals must cover degrees <= lmax_t + lmax_s.
    """
    dt, ds = sh_dim(lmax_t), sh_dim(lmax_s)
    b = np.zeros((dt, ds))
    idx = np.zeros((dt, ds), dtype=np.int64)
    for j in range(lmax_t + 1):
        for k in range(-j, j + 1):
            row = sh_flat_index(j, k)
            for l in range(lmax_s + 1):
                for m in range(-l, l + 1):
                    col = sh_flat_index(l, m)
                    b[row, col] = (-1.0) ** j * _sqrt_binom(l + j, m + k, l, m)
                    idx[row, col] = sh_flat_index(l + j, m + k)
    return b, idx


@lru_cache(maxsize=32)
def _m2m_tables(lmax_t: int, lmax_s: int):
    """Coefficient matrix and regular-solid index map for m2m.

    T_complex[(l,m),(l',m')] = B * conj(Rvals[ IDX ]) with the translation
    degree (l-l', m-m'); zero where |m-m'| > l-l'.
    """
    dt, ds = sh_dim(lmax_t), sh_dim(lmax_s)
    b = np.zeros((dt, ds))
    idx = np.zeros((dt, ds), dtype=np.int64)
    for l in range(lmax_t + 1):
        for m in range(-l, l + 1):
            row = sh_flat_index(l, m)
            for lp in range(min(l, lmax_s) + 1):
                for mp in range(-lp, lp + 1):
                    col = sh_flat_index(lp, mp)
                    lam, mu = l - lp, m - mp
                    if abs(mu) > lam:
                        continue
                    b[row, col] = _sqrt_binom(l, m, lam, mu)
                    idx[row, col] = sh_flat_index(lam, mu)
    return b, idx


@lru_cache(maxsize=32)
def _l2l_tables(lmax_t: int, lmax_s: int):
    """Coefficient matrix and regular-solid index map for l2l (degree l'-l)."""
    dt, ds = sh_dim(lmax_t), sh_dim(lmax_s)
    b = np.zeros((dt, ds))
    idx = np.zeros((dt, ds), dtype=np.int64)
    for lam in range(lmax_t + 1):
        for mu in range(-lam, lam + 1):
            row = sh_flat_index(lam, mu)
            for l in range(lam, lmax_s + 1):
                for m in range(-l, l + 1):
                    col = sh_flat_index(l, m)
                    lr, mr = l - lam, m - mu
                    if abs(mr) > lr:
                        continue
                    b[row, col] = _sqrt_binom(l, m, lam, mu)
                    idx[row, col] = sh_flat_index(lr, mr)
    return b, idx


def _complex_solid_values_many(lmax: int, points: np.ndarray, kind: str) -> np.ndarray:
    """Complex Racah solid harmonics (with Condon-Shortley phase), vectorised.

    Returns shape (npts, (lmax+1)**2).  Values (as opposed to expansion
    coefficients) of the real tables convert with the conjugate of the
    coefficient map: V^c_lm = conj( (U v)_lm ) for real v.
    """
    table = (regular_solid_table if kind == "R" else irregular_solid_table)
    vals = table(lmax, points)
    i1, s1, i2, s2, *_ = _vector_maps(lmax)
    return s1 * vals[..., i1] - 1j * (s2 * vals[..., i2])


def _complex_solid_values(lmax: int, point: np.ndarray, kind: str) -> np.ndarray:
    return _complex_solid_values_many(lmax, point[None, :], kind)[0]


def m2l_complex(disp: np.ndarray, lmax_t: int, lmax_s: int) -> np.ndarray:
    """Complex-basis multipole->local translation matrix for displacement d."""
    b, idx = _m2l_tables(lmax_t, lmax_s)
    svals = _complex_solid_values(lmax_t + lmax_s, np.asarray(disp, float), "S")
    return b * svals[idx]


def m2m_complex(t: np.ndarray, lmax_t: int, lmax_s: int) -> np.ndarray:
    b, idx = _m2m_tables(lmax_t, lmax_s)
    rvals = _complex_solid_values(lmax_t, np.asarray(t, float), "R")
    return b * np.conj(rvals)[idx]


def l2l_complex(s: np.ndarray, lmax_t: int, lmax_s: int) -> np.ndarray:
    b, idx = _l2l_tables(lmax_t, lmax_s)
    rvals = _complex_solid_values(lmax_s, np.asarray(s, float), "R")
    return b * np.conj(rvals)[idx]


def _realify(tc: np.ndarray, lmax_t: int, lmax_s: int,
             in_kind: str, out_kind: str) -> np.ndarray:
    """Conjugate a complex translation matrix into the real bases.

    ``in_kind``/``out_kind`` are 'M' (multipole-type vector, converts with U)
    or 'L' (local-type vector, converts with J U).
    """
    u_in = _real_to_complex(lmax_s)
    u_out = _real_to_complex(lmax_t)
    if in_kind == "L":
        u_in = _conj_flip(lmax_s) @ u_in
    if out_kind == "L":
        u_out = _conj_flip(lmax_t) @ u_out
    out = u_out.conj().T @ tc @ u_in
    return np.ascontiguousarray(out.real)


def m2l_real(disp, lmax_t: int, lmax_s: int) -> np.ndarray:
    """Real-basis multipole->local matrix; exact for disjoint supports."""
    return _realify(m2l_complex(disp, lmax_t, lmax_s), lmax_t, lmax_s, "M", "L")


def m2m_real(t, lmax_t: int, lmax_s: int) -> np.ndarray:
    """Real-basis multipole->multipole (center shift) matrix."""
    return _realify(m2m_complex(t, lmax_t, lmax_s), lmax_t, lmax_s, "M", "M")


def l2l_real(s, lmax_t: int, lmax_s: int) -> np.ndarray:
    """Real-basis local->local (center shift) matrix; exact on truncations."""
    return _realify(l2l_complex(s, lmax_t, lmax_s), lmax_t, lmax_s, "L", "L")
