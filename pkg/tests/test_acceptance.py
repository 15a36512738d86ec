"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Expensive shared
artifacts (lattice solves, the high-degree reference) are session-cached;
the high-degree reference additionally persists in the on-disk cache, so
repeated runs are much faster than the first.
"""

import time

import numpy as np
import pytest
import scipy.linalg

from dielspheres.coeffs import EXPANSION, FULL, CoeffVector
from dielspheres.geometry import Configuration, Sphere, build_lattice
from dielspheres.hierarchical import FarFieldParams, build_tree
from dielspheres.krylov import iteration_bound_gmres
from dielspheres.operators import (
    Discretization,
    charge_norm,
    charge_norm_pairings,
    compute_theory_constants,
    estimate_coercivity,
)
from dielspheres.strategies import (
    reference_solution,
    relative_error,
    solve_cg_strategy,
    solve_gmres_strategy,
)

RNG = np.random.default_rng(123)


def report(criterion, message):
    print(f"\nACCEPTANCE {criterion}: PASS - {message}")


# ---------------------------------------------------------------------------
# criteria 1-3 and 10 share one set of small dense instances
# ---------------------------------------------------------------------------

def dense_instances():
    """N in {1, 2, 4, 8}; radii uniform within each instance."""
    return [
        Configuration([Sphere((0, 0, 0), 1.2, 10.0, 1.0)], 1.0),
        Configuration([Sphere((0, 0, 0), 1.3, 0.5, 1.0),
                       Sphere((3.8, 0, 0), 1.3, 0.5, -1.0)], 1.0),
        build_lattice(2, 2, 1, 3.0, [(1.0, 10.0, 1.0)]),
        build_lattice(2, 2, 2, 3.2, [(1.1, 3.0, 1.0)]),
    ]


LMAXES = (1, 2, 3)


def test_criterion_01_dense_oracle_equivalence():
    worst_quad, worst_mv = 0.0, 0.0
    for cfg in dense_instances():
        for lmax in LMAXES:
            disc = Discretization(cfg, lmax)
            ga = disc.dense_v("reduced", method="analytic")
            gq = disc.dense_v("reduced", method="quadrature")
            rel = np.linalg.norm(ga - gq) / np.linalg.norm(ga)
            worst_quad = max(worst_quad, rel)
            assert rel <= 1e-8, (cfg.nspheres, lmax, rel)
            for dense, matvec, size in (
                    (disc.dense_system(), disc.system_matvec, disc.size_reduced),
                    (disc.dense_system_sym(), disc.sym_matvec, disc.size_reduced),
                    (disc.dense_adjoint_full(), disc.adjoint_full_matvec,
                     disc.size_full)):
                x = RNG.normal(size=size)
                dev = (np.linalg.norm(dense @ x - matvec(x))
                       / np.linalg.norm(dense @ x))
                worst_mv = max(worst_mv, dev)
                assert dev <= 1e-12, (cfg.nspheres, lmax, dev)
    report(1, f"analytic-vs-quadrature Frobenius <= {worst_quad:.2e} "
              f"(tol 1e-8); matvec-vs-dense <= {worst_mv:.2e} (tol 1e-12)")


def test_criterion_02_similarity_identity():
    worst = 0.0
    for cfg in dense_instances():
        for lmax in LMAXES:
            disc = Discretization(cfg, lmax)
            a = disc.dense_system()
            s = disc.dense_system_sym()
            dk = disc.dtn_kappa_matrix_diag()
            sim = (s / dk[:, None]) * dk[None, :]
            rel = np.linalg.norm(a - sim) / np.linalg.norm(a)
            worst = max(worst, rel)
            assert rel <= 1e-12, (cfg.nspheres, lmax, rel)
    report(2, f"||A - Dk^-1 Asym Dk||_F / ||A||_F <= {worst:.2e} (tol 1e-12)")


def test_criterion_03_spectrum_bounds():
    checked = []
    for cfg in dense_instances():
        for lmax in LMAXES:
            disc = Discretization(cfg, lmax)
            s = disc.dense_system_sym()
            mu = scipy.linalg.eigvalsh(s, np.diag(disc.gram_diag()))
            const = compute_theory_constants(
                cfg, c_equiv=1.0, c_v=estimate_coercivity(cfg, lmax, disc=disc))
            assert mu.min() >= const.alpha0 - 1e-8, (cfg.nspheres, lmax)
            assert mu.max() <= const.c_a_tilde, (cfg.nspheres, lmax)
            assert mu.min() > 0.0
            checked.append((mu.min(), const.alpha0, mu.max(), const.c_a_tilde))
    tightest = min(c[0] - c[1] for c in checked)
    report(3, f"all spectra within [alpha0 - 1e-8, C]; positivity holds; "
              f"smallest eigenvalue margin {tightest:.2e}")


def test_criterion_10_reconstruction_residual():
    tol = 1e-12
    worst = 0.0
    for cfg in dense_instances():
        for lmax in LMAXES:
            disc = Discretization(cfg, lmax)
            res = solve_gmres_strategy(cfg, lmax, tol=tol, disc=disc)
            rhs_norm = charge_norm_pairings(disc.rhs_adjoint_full(),
                                            cfg.radii, lmax, FULL)
            rel = disc.galerkin_residual(res.nu) / rhs_norm
            worst = max(worst, rel)
            assert rel <= 10 * tol, (cfg.nspheres, lmax, rel)
    report(10, f"full-space Galerkin residual <= {worst:.2e} "
               f"(tol {10 * tol:.0e}) on all dense instances")


# ---------------------------------------------------------------------------
# criterion 4: strategy cross-check on the 125-sphere lattice
# ---------------------------------------------------------------------------

def test_criterion_04_strategy_cross_check():
    tol = 1e-10
    cfg = build_lattice(5, 5, 5, 2.5, [(1.0, 10.0, 1.0)])
    disc = Discretization(cfg, 5)
    g = solve_gmres_strategy(cfg, 5, tol=tol, disc=disc)
    c = solve_cg_strategy(cfg, 5, tol=tol, disc=disc)
    diff = CoeffVector(g.nu.values - c.nu.values, 5, 125, FULL, EXPANSION)
    rel = charge_norm(diff, cfg.radii) / charge_norm(g.nu, cfg.radii)
    assert rel <= 10 * tol, rel
    report(4, f"GMRES vs CG charge agreement {rel:.2e} (tol {10 * tol:.0e}); "
              f"iterations {g.report.iterations}/{c.report.iterations}")


# ---------------------------------------------------------------------------
# criteria 5 + 6: N-independence and the iteration bound
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lattice_runs():
    """Tight truth + residual-tol solves + numeric constants per lattice size."""
    runs = []
    for s in (2, 3, 4, 5, 6):
        cfg = build_lattice(s, s, s, 2.5, [(1.0, 10.0, 1.0)])
        disc = Discretization(cfg, 5)
        truth = solve_gmres_strategy(cfg, 5, tol=1e-13, disc=disc).nu
        g = solve_gmres_strategy(cfg, 5, tol=1e-10, disc=disc, truth=truth)
        c = solve_cg_strategy(cfg, 5, tol=1e-10, disc=disc, truth=truth)
        const = compute_theory_constants(
            cfg, c_equiv=1.0, c_v=estimate_coercivity(cfg, 5, disc=disc))
        runs.append({"n": cfg.nspheres, "gmres": g, "cg": c, "const": const})
    return runs


def test_criterion_05_n_independence(lattice_runs):
    counts = {"gmres": [r["gmres"].report.iterations for r in lattice_runs],
              "cg": [r["cg"].report.iterations for r in lattice_runs]}
    ns = [r["n"] for r in lattice_runs]
    for solver, its in counts.items():
        spread = max(its) - min(its)
        assert spread <= 2, (
            f"{solver} iteration counts over N={ns} are {its}: spread {spread} "
            f"exceeds 2. Counts are flat at the N-independent plateau for "
            f"N >= 64 and *smaller* below it (small lattices converge early); "
            f"no growth with N is observed, but the literal <= 2 variation "
            f"across the full range does not hold.")
    report(5, f"iterations over N={ns}: gmres {counts['gmres']}, "
              f"cg {counts['cg']} (each varies by <= 2)")


def test_criterion_06_iteration_bound_validity(lattice_runs):
    margins = []
    for run in lattice_runs:
        r_eps = iteration_bound_gmres(run["const"], 5, 1e-8)
        for solver in ("gmres", "cg"):
            hist = np.asarray(run[solver].error_history)
            reached = np.flatnonzero(hist <= 1e-8)
            assert reached.size > 0, (run["n"], solver, hist[-1])
            observed = int(reached[0]) + 1
            assert observed <= r_eps, (run["n"], solver, observed, r_eps)
            margins.append((run["n"], solver, observed, r_eps))
    worst = max(margins, key=lambda m: m[2] / m[3])
    report(6, f"observed iterations to error 1e-8 always <= R_eps; "
              f"tightest case N={worst[0]} {worst[1]}: {worst[2]} <= {worst[3]}")


# ---------------------------------------------------------------------------
# criterion 7: parameter-sweep shapes
# ---------------------------------------------------------------------------

def iterations_at_error(config, lmax, target=1e-6, maxit=600):
    truth = solve_gmres_strategy(config, lmax, tol=1e-13, maxit=maxit).nu
    out = {}
    for solver, run in (("gmres", solve_gmres_strategy), ("cg", solve_cg_strategy)):
        res = run(config, lmax, tol=1e-13, maxit=maxit, truth=truth)
        hist = np.asarray(res.error_history)
        reached = np.flatnonzero(hist <= target)
        out[solver] = int(reached[0]) + 1 if reached.size else res.report.iterations
    return out


def _plateau(seq, slack=2):
    return abs(seq[-1] - seq[-2]) <= slack


def _roughly_nondecreasing(seq, slack=1):
    return all(b >= a - slack for a, b in zip(seq, seq[1:]))


def test_criterion_07a_kappa_sweep_shape():
    above, below = [], []
    for ratio in (1e1, 1e2, 1e3, 1e4):
        cfg = build_lattice(5, 5, 5, 2.5, [(1.0, ratio, 1.0)])
        above.append(iterations_at_error(cfg, 5))
    for ratio in (1e-1, 1e-2, 1e-3, 1e-4):
        cfg = build_lattice(5, 5, 5, 2.5, [(1.0, ratio, 1.0)])
        below.append(iterations_at_error(cfg, 5))
    for solver in ("gmres", "cg"):
        up = [r[solver] for r in above]
        dn = [r[solver] for r in below]
        assert _roughly_nondecreasing(up), (solver, up)
        assert _roughly_nondecreasing(dn), (solver, dn)
        assert _plateau(up), (solver, up)
        assert _plateau(dn), (solver, dn)
    report("7a", f"kappa-ratio sweep non-decreasing then plateau; "
                 f"gmres toward 1e4: {[r['gmres'] for r in above]}, "
                 f"toward 1e-4: {[r['gmres'] for r in below]}")


def test_criterion_07b_radii_sweep_plateau():
    counts = []
    for r in (1e-2, 1e-3, 1e-4, 1e-5):   # ratio 1e2 .. 1e5
        cfg = build_lattice(5, 5, 5, 2.5, [(1.0, 10.0, 1.0), (r, 10.0, 1.0)])
        counts.append(iterations_at_error(cfg, 5))
    for solver in ("gmres", "cg"):
        seq = [c[solver] for c in counts]
        # constant from ratio ~1e3 on
        assert max(seq[1:]) - min(seq[1:]) <= 2, (solver, seq)
    report("7b", f"radii-ratio sweep plateaus for ratio >= 1e3; "
                 f"gmres {[c['gmres'] for c in counts]}, "
                 f"cg {[c['cg'] for c in counts]} over ratios 1e2..1e5")


def test_criterion_07c_separation_sweep_shape():
    seps = (5.0, 1.0, 1e-1, 1e-2, 1e-3, 1e-4)
    counts = []
    for sep in seps:
        cfg = build_lattice(5, 5, 5, 2.0 + sep, [(1.0, 10.0, 1.0)])
        counts.append(iterations_at_error(cfg, 5))
    for solver in ("gmres", "cg"):
        seq = [c[solver] for c in counts]
        assert _roughly_nondecreasing(seq), (solver, seq)   # grows as sep shrinks
        assert seq[-1] > seq[0], (solver, seq)
        assert _plateau(seq), (solver, seq)                 # then plateaus
    report("7c", f"separation sweep grows then plateaus; "
                 f"gmres {[c['gmres'] for c in counts]} over sep {seps}")


# ---------------------------------------------------------------------------
# criterion 8: hierarchical exactness and accuracy
# ---------------------------------------------------------------------------

def test_criterion_08_far_field_exactness_and_accuracy():
    lmax = 5
    cfg512 = build_lattice(8, 8, 8, 7.0, [(3.0, 10.0, -1.0), (2.0, 5.0, 1.0)])

    # depth-1 tree is exact
    disc = Discretization(cfg512, lmax)
    x = RNG.normal(size=(512, 36))
    direct = disc.v_pairings(x)
    tree1 = build_tree(cfg512, FarFieldParams(p=2 * lmax, depth=1))
    dev = (np.max(np.abs(Discretization(cfg512, lmax, coupling=tree1)
                         .v_pairings(x) - direct))
           / np.max(np.abs(direct)))
    assert dev <= 1e-13, dev

    # leaf cap 32 and P = 2 lmax: far-field solution error below the
    # discretisation error for lattices up to N = 512
    results = []
    for size in (4, 8):
        cfg = build_lattice(size, size, size, 7.0,
                            [(3.0, 10.0, -1.0), (2.0, 5.0, 1.0)])
        reference = reference_solution(cfg, lmax_ref=20, tol=1e-13)
        pure = solve_gmres_strategy(cfg, lmax, tol=1e-10)
        disc_err = relative_error(pure, reference)
        tree = build_tree(cfg, FarFieldParams(p=2 * lmax,
                                              max_particles_per_leaf=32))
        approx = solve_gmres_strategy(cfg, lmax, tol=1e-10, coupling=tree)
        fmm_err = relative_error(approx, pure)
        assert fmm_err < disc_err, (cfg.nspheres, fmm_err, disc_err)
        results.append((cfg.nspheres, tree.depth, fmm_err, disc_err))
    summary = "; ".join(f"N={n} (D={d}): fmm {fe:.2e} < disc {de:.2e}"
                        for n, d, fe, de in results)
    report(8, f"depth-1 exact to {dev:.1e}; {summary}")


# ---------------------------------------------------------------------------
# criterion 9: linear scaling in cost
# ---------------------------------------------------------------------------

def test_criterion_09_linear_scaling():
    from dielspheres.experiments import bench

    rows = bench(sizes=(4, 8, 16), lmax=5, tol=1e-6)
    slopes = {}
    for solver in ("gmres", "cg"):
        sub = [r for r in rows if r.solver == solver]
        its = [r.iterations for r in sub]
        assert max(its) - min(its) <= 2, (solver, its)
        ns = np.log([r.param for r in sub])
        ts = np.log([r.wall_time_s for r in sub])
        slope = float(np.polyfit(ns, ts, 1)[0])
        assert slope <= 1.2, (solver, slope)
        slopes[solver] = (slope, its)
    report(9, f"solver wall-time log-log slopes over N=(64,512,4096): "
              f"gmres {slopes['gmres'][0]:.2f}, cg {slopes['cg'][0]:.2f} "
              f"(<= 1.2); iterations {slopes['gmres'][1]}/{slopes['cg'][1]}")
