"""Sphere ensembles: construction, lattice generation, and validation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Sphere:
    """A dielectric sphere: center, radius, dielectric constant, total free charge."""

    center: tuple[float, float, float]
    radius: float
    kappa: float
    charge: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class AssumptionReport:
    """Extrema of the geometric/dielectric parameters of a configuration.

    ``min_separation`` is min over pairs of |x_i - x_j| - r_i - r_j
    (infinity for a single sphere); ``sign_uniform`` is one of
    'above' (all kappa > kappa0), 'below', or 'mixed'.
    """

    min_radius: float
    max_radius: float
    min_separation: float
    min_kappa: float
    max_kappa: float
    sign_uniform: str


class Configuration:
    """An ordered collection of disjoint spheres in a background medium.

    Immutable after construction; array views (centers, radii, kappas,
    charges) are cached for vectorised access.
    """

    def __init__(self, spheres, kappa0: float):
        spheres = list(spheres)
        if not spheres:
            raise ValueError("configuration must contain at least one sphere")
        if kappa0 <= 0:
            raise ValueError(f"kappa0 must be positive, got {kappa0}")
        for i, s in enumerate(spheres):
            if s.kappa == kappa0:
                raise ValueError(
                    f"sphere {i} has kappa equal to the background kappa0={kappa0}; "
                    "zero dielectric contrast is not supported")
        self.spheres = tuple(spheres)
        self.kappa0 = float(kappa0)
        self.centers = np.array([s.center for s in spheres], dtype=float)
        self.radii = np.array([s.radius for s in spheres], dtype=float)
        self.kappas = np.array([s.kappa for s in spheres], dtype=float)
        self.charges = np.array([s.charge for s in spheres], dtype=float)
        self._check_disjoint()

    def _check_disjoint(self):
        sep = min_separation(self.centers, self.radii)
        if sep <= 0:
            raise ValueError(f"spheres intersect (minimal separation {sep:.3e})")

    def __len__(self):
        return len(self.spheres)

    @property
    def nspheres(self) -> int:
        return len(self.spheres)

    @property
    def contrast(self) -> np.ndarray:
        """(kappa_i - kappa0)/kappa0 per sphere."""
        return (self.kappas - self.kappa0) / self.kappa0

    def sign_uniform(self) -> str:
        above = np.all(self.kappas > self.kappa0)
        below = np.all(self.kappas < self.kappa0)
        return "above" if above else ("below" if below else "mixed")

    def digest(self) -> str:
        """Hex digest identifying the configuration (used for caching)."""
        import hashlib

        h = hashlib.sha256()
        for arr in (self.centers, self.radii, self.kappas, self.charges,
                    np.array([self.kappa0])):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def min_separation(centers: np.ndarray, radii: np.ndarray,
                   chunk: int = 512) -> float:
    """Minimal surface-to-surface separation over all sphere pairs.

    Returns +inf for a single sphere; O(N^2) evaluated in chunks.
    """
    n = len(centers)
    if n < 2:
        return np.inf
    best = np.inf
    for start in range(0, n, chunk):
        block = slice(start, min(start + chunk, n))
        d = np.linalg.norm(centers[block, None, :] - centers[None, :, :], axis=2)
        gap = d - radii[block, None] - radii[None, :]
        idx = np.arange(start, block.stop)
        gap[idx - start, idx] = np.inf          # ignore self pairs
        best = min(best, gap.min())
    return float(best)


def validate(config: Configuration) -> AssumptionReport:
    """Report parameter extrema and the dielectric sign pattern.

    Raises ValueError if any pair of spheres intersects.
    """
    sep = min_separation(config.centers, config.radii)
    if sep <= 0:
        raise ValueError(f"spheres intersect (minimal separation {sep:.3e})")
    return AssumptionReport(
        min_radius=float(config.radii.min()),
        max_radius=float(config.radii.max()),
        min_separation=sep,
        min_kappa=float(config.kappas.min()),
        max_kappa=float(config.kappas.max()),
        sign_uniform=config.sign_uniform(),
    )


def build_lattice(nx: int, ny: int, nz: int, edge: float, species,
                  kappa0: float = 1.0, pattern: str = "alternating") -> Configuration:
    """Spheres on a regular cubic lattice of the given edge length.

    ``species`` is a list of (radius, kappa, charge) tuples (or Sphere-less
    dicts with those keys).  Lattice points are (i, j, k) * edge with i the
    fastest-varying index; sphere identity equals the lattice index.

    Patterns:
      * ``alternating`` - species chosen by parity of i+j+k (3D
        checkerboard); with a single species the charge sign alternates by
        the same parity.
      * ``striped`` - species chosen by i modulo the species count; charges
        taken verbatim from the species.
    """
    if min(nx, ny, nz) < 1:
        raise ValueError("lattice dimensions must be >= 1")
    if pattern not in ("alternating", "striped"):
        raise ValueError(f"unknown pattern {pattern!r}")
    spec = [_as_species(s) for s in species]
    if not spec:
        raise ValueError("at least one species is required")
    max_r = max(r for r, _, _ in spec)
    if edge <= 2 * max_r and (nx, ny, nz) != (1, 1, 1):
        raise ValueError(
            f"edge {edge} too small for species radii (largest {max_r}); "
            "adjacent spheres would intersect")
    spheres = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                if pattern == "alternating":
                    parity = (i + j + k) % 2
                    r, kap, q = spec[parity % len(spec)]
                    if len(spec) == 1:
                        q = q * (-1.0) ** parity
                else:
                    r, kap, q = spec[i % len(spec)]
                spheres.append(Sphere(center=(i * edge, j * edge, k * edge),
                                      radius=r, kappa=kap, charge=q))
    return Configuration(spheres, kappa0=kappa0)


def _as_species(s):
    if isinstance(s, dict):
        return (float(s["radius"]), float(s["kappa"]), float(s.get("charge", 0.0)))
    r, kap, q = s
    return (float(r), float(kap), float(q))
