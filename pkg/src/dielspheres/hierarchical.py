"""Octree-accelerated application of the off-diagonal single-layer coupling.

A uniform octree over the padded bounding cube splits sphere interactions
into near field (spheres in the same or adjacent leaves, exact grouped
translation blocks, identical to the direct path) and far field
(sphere-to-box multipole aggregation, box-to-box translations between
well-separated boxes, box-to-sphere local evaluation, all truncated at the
expansion degree P).  Well-separatedness is the classical same-level
adjacency rule: boxes sharing a face, edge or corner are near.

The tree is immutable after construction; expansion arrays live on the
stack of each apply call, so concurrent applies are safe.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .coupling import GroupedTranslation
from .geometry import Configuration
from .harmonics import sh_dim

_PAD = 1.05


@dataclass(frozen=True)
class FarFieldParams:
    """Far-field controls: expansion degree and tree-depth policy.

    Exactly one of ``depth`` (explicit leaf level) or
    ``max_particles_per_leaf`` (smallest depth satisfying the cap) must be
    given.
    """

    p: int
    depth: int | None = None
    max_particles_per_leaf: int | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("expansion degree p must be >= 1")
        if (self.depth is None) == (self.max_particles_per_leaf is None):
            raise ValueError("exactly one of depth / max_particles_per_leaf "
                             "must drive tree construction")
        if self.depth is not None and self.depth < 1:
            raise ValueError("depth must be >= 1")
        if (self.max_particles_per_leaf is not None
                and self.max_particles_per_leaf < 1):
            raise ValueError("max_particles_per_leaf must be >= 1")


class Octree:
    """Uniform octree coupling engine over a sphere configuration.

    Exposes the same ``apply(multipoles) -> locals`` contract as the direct
    engine, so a built tree slots into :class:`~dielspheres.operators.
    Discretization` as its coupling.
    """

    def __init__(self, config: Configuration, params: FarFieldParams):
        self.config = config
        self.p = params.p
        centers = config.centers
        lo, hi = centers.min(axis=0), centers.max(axis=0)
        mid = 0.5 * (lo + hi)
        side = float(np.max(hi - lo)) * _PAD
        if side == 0.0:
            side = max(2.0 * float(config.radii.max()), 1.0)
        self.cube_center = mid
        self.cube_side = side
        self.origin = mid - 0.5 * side

        if params.depth is not None:
            self.depth = params.depth
        else:
            cap = params.max_particles_per_leaf
            self.depth = 1
            while self._max_occupancy(self.depth) > cap:
                self.depth += 1
        self._build_levels()
        self._near = None           # grouped near-field pairs, built lazily
        self._chains = {}           # per source-degree translation pipelines

    # -- construction ---------------------------------------------------------

    def _coords(self, level: int) -> np.ndarray:
        nb = 2 ** level
        w = self.cube_side / nb
        c = np.floor((self.config.centers - self.origin) / w).astype(np.int64)
        return np.clip(c, 0, nb - 1)

    def _max_occupancy(self, level: int) -> int:
        coords = self._coords(level)
        _, counts = np.unique(coords, axis=0, return_counts=True)
        return int(counts.max())

    def _build_levels(self):
        d = self.depth
        leaf_coords = self._coords(d)
        self.levels = {}
        coords = leaf_coords
        for level in range(d, 0, -1):
            boxes, inverse = np.unique(coords, axis=0, return_inverse=True)
            self.levels[level] = {
                "boxes": boxes,
                "width": self.cube_side / 2 ** level,
                "centers": self.origin + (boxes + 0.5) * (self.cube_side / 2 ** level),
            }
            if level == d:
                self.leaf_of_sphere = inverse
            else:
                self.levels[level + 1]["parent"] = inverse
            coords = boxes // 2
        self.leaf_lists = [np.flatnonzero(self.leaf_of_sphere == b)
                           for b in range(len(self.levels[d]["boxes"]))]

    def _near_pairs(self):
        """(targets, sources) over spheres in the same or adjacent leaves."""
        d = self.depth
        boxes = self.levels[d]["boxes"]
        index = {tuple(c): i for i, c in enumerate(boxes)}
        offsets = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1)
                            for k in (-1, 0, 1)])
        tg, sg = [], []
        for bi, c in enumerate(boxes):
            spheres_t = self.leaf_lists[bi]
            if len(spheres_t) == 0:
                continue
            for off in offsets:
                bj = index.get(tuple(c + off))
                if bj is None:
                    continue
                spheres_s = self.leaf_lists[bj]
                t, s = np.meshgrid(spheres_t, spheres_s, indexing="ij")
                t, s = t.ravel(), s.ravel()
                keep = t != s
                tg.append(t[keep])
                sg.append(s[keep])
        if not tg:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        return np.concatenate(tg), np.concatenate(sg)

    def _interaction_lists(self, level: int):
        """Same-level box pairs with adjacent parents but non-adjacent boxes."""
        boxes = self.levels[level]["boxes"]
        index = {tuple(c): i for i, c in enumerate(boxes)}
        rng = range(-3, 4)
        offsets = [np.array(o) for o in
                   ((i, j, k) for i in rng for j in rng for k in rng)
                   if max(abs(o[0]), abs(o[1]), abs(o[2])) >= 2]
        tg, sg, disp = [], [], []
        w = self.levels[level]["width"]
        for bi, c in enumerate(boxes):
            pc = c // 2
            for off in offsets:
                cs = c - off          # source box coordinates
                if np.max(np.abs(cs // 2 - pc)) > 1:
                    continue
                bj = index.get(tuple(cs))
                if bj is None:
                    continue
                tg.append(bi)
                sg.append(bj)
                disp.append(off * w)
        if not tg:
            return None
        return (np.array(disp, dtype=float), np.array(tg, np.int64),
                np.array(sg, np.int64))

    # -- translation pipelines -------------------------------------------------

    def _chain(self, lmax_sphere: int):
        """Grouped translations for a given sphere expansion degree."""
        chain = self._chains.get(lmax_sphere)
        if chain is not None:
            return chain
        p, d = self.p, self.depth
        centers = self.config.centers
        leaf = self.levels[d]
        n = self.config.nspheres
        nleaf = len(leaf["boxes"])
        sphere_box_disp = centers - leaf["centers"][self.leaf_of_sphere]
        spheres = np.arange(n)
        chain = {
            "p2m": GroupedTranslation(
                "m2m", sphere_box_disp, self.leaf_of_sphere, spheres,
                p, lmax_sphere, nleaf, n),
            "l2p": GroupedTranslation(
                "l2l", sphere_box_disp, spheres, self.leaf_of_sphere,
                lmax_sphere, p, n, nleaf),
            "m2m": {}, "l2l": {}, "m2l": {},
        }
        for level in range(d, 1, -1):       # child level -> parent level
            child = self.levels[level]
            parent_idx = child["parent"]
            disp = child["centers"] - self.levels[level - 1]["centers"][parent_idx]
            nchild = len(child["boxes"])
            nparent = len(self.levels[level - 1]["boxes"])
            # m2m displacement convention: source center - target center;
            # l2l convention: target center - source center (both = child - parent)
            chain["m2m"][level] = GroupedTranslation(
                "m2m", disp, parent_idx, np.arange(nchild), p, p,
                nparent, nchild)
            chain["l2l"][level] = GroupedTranslation(
                "l2l", disp, np.arange(nchild), parent_idx, p, p,
                nchild, nparent)
        for level in range(2, d + 1):
            lists = self._interaction_lists(level)
            if lists is not None:
                disp, tg, sg = lists
                nb = len(self.levels[level]["boxes"])
                chain["m2l"][level] = GroupedTranslation(
                    "m2l", disp, tg, sg, p, p, nb, nb)
        self._chains[lmax_sphere] = chain
        return chain

    # -- application ------------------------------------------------------------

    def apply(self, multipoles: np.ndarray) -> np.ndarray:
        """Local expansions at sphere centers from all other spheres.

        Near pairs use exact translation blocks; far pairs go through the
        tree truncated at degree P.  Input shape (nspheres, (L+1)^2) for any
        sphere degree L; output has the same shape.
        """
        n, dim = multipoles.shape
        lmax_sphere = int(np.sqrt(dim)) - 1
        if sh_dim(lmax_sphere) != dim:
            raise ValueError("multipole block is not a full (l, m) square")
        if self._near is None:
            tg, sg = self._near_pairs()
            disp = self.config.centers[tg] - self.config.centers[sg]
            self._near = GroupedTranslation(
                "m2l", disp, tg, sg, lmax_sphere, lmax_sphere, n, n)
        out = self._near.apply(multipoles)
        if self.depth < 2:
            return out
        chain = self._chain(lmax_sphere)
        d = self.depth
        mult = {d: chain["p2m"].apply(multipoles)}
        for level in range(d, 1, -1):
            if level - 1 >= 2:
                mult[level - 1] = chain["m2m"][level].apply(mult[level])
        locs = None
        for level in range(2, d + 1):
            if locs is not None:
                locs = chain["l2l"][level].apply(locs)
            else:
                locs = np.zeros((len(self.levels[level]["boxes"]), sh_dim(self.p)))
            if level in chain["m2l"]:
                locs += chain["m2l"][level].apply(mult[level])
        out += chain["l2p"].apply(locs)
        return out


def build_tree(config: Configuration, params: FarFieldParams) -> Octree:
    """Build the octree coupling engine for a configuration."""
    return Octree(config, params)


def fmm_error_study(config: Configuration, lmax: int, grid,
                    solver_tol: float = 1e-10, lmax_ref: int = 20,
                    reference=None):
    """Solution error induced by the far field across a (P, D) grid.

    For each (P, D) the problem is solved with the tree engine and compared
    in the dual norm against the pure-discrete solution (direct engine, same
    lmax); the discretisation error of the pure-discrete solution against a
    high-degree reference is reported alongside.  Returns a list of result
    rows.
    """
    from .operators import Discretization
    from .strategies import (reference_solution, relative_error,
                             solve_gmres_strategy)

    if config.nspheres > 2000:
        raise ValueError("error study requires the direct oracle; "
                         "configuration too large")
    pure = solve_gmres_strategy(config, lmax, tol=solver_tol)
    if reference is None:
        reference = reference_solution(config, lmax_ref=lmax_ref)
    disc_error = relative_error(pure, reference)
    rows = []
    for p, depth in grid:
        tree = build_tree(config, FarFieldParams(p=p, depth=depth))
        t0 = time.perf_counter()
        approx = solve_gmres_strategy(config, lmax, tol=solver_tol,
                                      coupling=tree)
        elapsed = time.perf_counter() - t0
        fmm_error = relative_error(approx, pure)
        rows.append({
            "n": config.nspheres, "lmax": lmax, "p": p, "depth": depth,
            "fmm_error": fmm_error, "disc_error": disc_error,
            "iterations": approx.report.iterations, "wall_time_s": elapsed,
        })
    return rows
