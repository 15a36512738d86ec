"""Per-sphere spherical-harmonic coefficient vectors and their binary format.

Layout: values are stored flat in (sphere, l, m) order.  Full-space vectors
carry degrees 0..lmax per sphere (block size (lmax+1)^2); reduced-space
vectors carry degrees 1..lmax (block size (lmax+1)^2 - 1).

Two representations of the same function are used:

* ``expansion``  - the coefficients c with  u|sphere_i = sum c_lm y_lm
* ``projection`` - the L2 pairings (u, y^i_lm)_{L2(surface_i)}

which differ exactly by the factor r_i^2 per sphere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .harmonics import sh_dim

FULL = "full"
REDUCED = "reduced"
EXPANSION = "expansion"
PROJECTION = "projection"

_MAGIC = b"DSPC"
_VERSION = 1


def block_size(lmax: int, space: str) -> int:
    return sh_dim(lmax) - (1 if space == REDUCED else 0)


def degree_array(lmax: int, space: str) -> np.ndarray:
    """Degree l of each in-block flat index."""
    degs = np.concatenate([np.full(2 * l + 1, l) for l in range(lmax + 1)])
    return degs[1:] if space == REDUCED else degs


@dataclass
class CoeffVector:
    """Flat coefficient vector over all spheres with space/representation tags."""

    values: np.ndarray
    lmax: int
    nspheres: int
    space: str = FULL
    rep: str = EXPANSION

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = self.nspheres * block_size(self.lmax, self.space)
        if self.values.shape != (expected,):
            raise ValueError(
                f"coefficient vector has length {self.values.shape}, "
                f"expected ({expected},) for space={self.space!r}")
        if self.space not in (FULL, REDUCED):
            raise ValueError(f"unknown space tag {self.space!r}")
        if self.rep not in (EXPANSION, PROJECTION):
            raise ValueError(f"unknown representation tag {self.rep!r}")

    @classmethod
    def zeros(cls, lmax: int, nspheres: int, space: str = FULL,
              rep: str = EXPANSION) -> "CoeffVector":
        return cls(np.zeros(nspheres * block_size(lmax, space)),
                   lmax, nspheres, space, rep)

    @property
    def block(self) -> int:
        return block_size(self.lmax, self.space)

    def per_sphere(self) -> np.ndarray:
        """View shaped (nspheres, block)."""
        return self.values.reshape(self.nspheres, self.block)

    def _scaled(self, radii: np.ndarray, factor: np.ndarray, rep: str) -> "CoeffVector":
        vals = (self.per_sphere() * factor[:, None]).ravel()
        return CoeffVector(vals, self.lmax, self.nspheres, self.space, rep)

    def to_projection(self, radii: np.ndarray) -> "CoeffVector":
        """Exact conversion expansion -> projection (multiply by r_i^2)."""
        if self.rep == PROJECTION:
            return self
        return self._scaled(radii, np.asarray(radii) ** 2, PROJECTION)

    def to_expansion(self, radii: np.ndarray) -> "CoeffVector":
        """Exact conversion projection -> expansion (divide by r_i^2)."""
        if self.rep == EXPANSION:
            return self
        return self._scaled(radii, np.asarray(radii) ** -2.0, EXPANSION)

    def to_reduced(self) -> "CoeffVector":
        """Drop the per-sphere mean (l = 0) entries."""
        if self.space == REDUCED:
            return self
        vals = self.per_sphere()[:, 1:].ravel().copy()
        return CoeffVector(vals, self.lmax, self.nspheres, REDUCED, self.rep)

    def to_full(self) -> "CoeffVector":
        """Zero-pad the per-sphere mean (l = 0) entries."""
        if self.space == FULL:
            return self
        out = np.zeros((self.nspheres, sh_dim(self.lmax)))
        out[:, 1:] = self.per_sphere()
        return CoeffVector(out.ravel(), self.lmax, self.nspheres, FULL, self.rep)

    def truncated(self, lmax_new: int) -> "CoeffVector":
        """Keep degrees <= lmax_new (requires lmax_new <= lmax)."""
        if lmax_new > self.lmax:
            raise ValueError("cannot truncate to a higher degree")
        keep = block_size(lmax_new, self.space)
        vals = self.per_sphere()[:, :keep].ravel().copy()
        return CoeffVector(vals, lmax_new, self.nspheres, self.space, self.rep)

    def copy(self) -> "CoeffVector":
        return CoeffVector(self.values.copy(), self.lmax, self.nspheres,
                           self.space, self.rep)


def save_coeff_vector(path, vec: CoeffVector) -> None:
    """Write a coefficient vector in the flat binary layout.

    Header: magic 'DSPC', u32 version, u32 N, u32 lmax, u8 space tag
    (0 full/1 reduced), u8 representation tag (0 expansion/1 projection),
    2 pad bytes; then the values as little-endian float64 in (i, l, m) order.
    """
    header = struct.pack(
        "<4sIIIBBxx", _MAGIC, _VERSION, vec.nspheres, vec.lmax,
        0 if vec.space == FULL else 1,
        0 if vec.rep == EXPANSION else 1)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(vec.values, dtype="<f8").tobytes())


def load_coeff_vector(path) -> CoeffVector:
    """Read a coefficient vector written by :func:`save_coeff_vector`."""
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIIIBBxx"))
        magic, version, n, lmax, space_tag, rep_tag = struct.unpack("<4sIIIBBxx", header)
        if magic != _MAGIC:
            raise ValueError(f"not a coefficient-vector file (magic {magic!r})")
        if version != _VERSION:
            raise ValueError(f"unsupported format version {version}")
        space = FULL if space_tag == 0 else REDUCED
        rep = EXPANSION if rep_tag == 0 else PROJECTION
        data = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    return CoeffVector(data, lmax, n, space, rep)
