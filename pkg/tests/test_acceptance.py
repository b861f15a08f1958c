"""Top-level acceptance gate: ten numbered criteria, each emitting one
PASS/FAIL line with its pinned tolerance and measured value."""

import math
import time

import numpy as np
import pytest

from heatlayer.ambient import eval_E
from heatlayer.bounds import (GaussianBoundSpec, default_grid, fit_bound,
                              proof_pipeline_check, upper_volume_fit)
from heatlayer.geometry import DomainSpec, distance
from heatlayer.hypotheses import (check_cc, check_dp, check_interior_cone,
                                  check_vlb, sample_domain)
from heatlayer.kernel import (NeumannKernel, exact_interval_dirichlet_kernel,
                              exact_interval_kernel, neumann_residual,
                              reproducing_check)
from heatlayer.layer import LayerSystem, TimeGrid

HALF_PI = math.pi / 2.0


def report(num, ok, detail):
    line = f"ACCEPTANCE {num:02d}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def test_criterion_01_arc_oracle_equivalence(arc_nk):
    t0 = time.perf_counter()
    xs = np.linspace(0.0, HALF_PI, 14)[1:-1]  # 12 interior grid points
    worst = 0.0
    for t in (0.05, 0.1, 0.2, 0.5, 1.0):
        for x in xs:
            prof = arc_nk.q_profile(np.array([x]), xs[:, None], t)
            ref = exact_interval_kernel(HALF_PI, x, xs, t)
            worst = max(worst, float(np.max(np.abs(prof - ref) / ref)))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-3 and elapsed <= 120.0,
           f"sup rel err {worst:.3e} (tol 1e-3) over 12x12x5 grid "
           f"in {elapsed:.1f}s (limit 120s)")


def test_criterion_02_antipodal_decay_exponent(sphere_ev):
    t0 = time.perf_counter()
    reg = sphere_ev.antipodal_exponent(t_window=(0.01, 0.1))
    elapsed = time.perf_counter() - t0
    slope, c = reg["slope"], math.exp(reg["intercept"])
    report(2, abs(slope + 1.5) <= 0.05 and c > 0 and elapsed <= 10.0,
           f"slope {slope:.4f} (target -1.5 +/- 0.05), c {c:.4f} > 0, "
           f"{elapsed:.1f}s (limit 10s)")


def test_criterion_03_flat_comparator_domination(circle_ev, torus_ev,
                                                 sphere_ev):
    def min_ratio(ev, pts, times):
        worst = math.inf
        for t in times:
            for x in pts:
                for y in pts:
                    d = distance(ev.manifold, x, y)
                    worst = min(worst, ev.eval_p(x, y, t)
                                / eval_E(ev.manifold.dim, d, t))
        return worst

    times = [0.05, 0.2, 0.5, 1.0, 2.0]
    th = np.linspace(0.0, 2 * math.pi, 8, endpoint=False)
    r_circ = min_ratio(circle_ev, th[:, None], times)
    g = np.linspace(0.0, 2 * math.pi, 4, endpoint=False)
    r_torus = min_ratio(torus_ev, np.array([[a, b] for a in g for b in g]),
                        times)
    sp = np.array([[c, a] for c in np.linspace(0.3, math.pi - 0.3, 4)
                   for a in np.linspace(0.0, 5.0, 3)])
    r_sph = min_ratio(sphere_ev, sp, times)
    ok = r_circ >= 1 - 1e-10 and r_torus >= 1 - 1e-10 \
        and r_sph >= 1 - 1e-3
    report(3, ok,
           f"min p/E: circle {r_circ:.12f}, torus {r_torus:.12f} "
           f"(tol 1-1e-10); sphere {r_sph:.6f} (tol 1-1e-3)")


def test_criterion_04_kernel_identities(arc_nk, cap_nk):
    mass_worst = 0.0
    for nk, x in ((arc_nk, np.array([0.4])),
                  (cap_nk, np.array([0.3, 1.0]))):
        for t in (0.1, 0.4, 1.0):
            mass_worst = max(mass_worst, abs(nk.mass(x, t) - 1.0))
    nodes = arc_nk.volume_nodes
    pairs = [(nodes[6], nodes[-7]), (nodes[11], nodes[13])]
    rv = reproducing_check(arc_nk, 0.4, 0.2, pairs, tolerance=1e-2)
    psi = np.exp(-((nodes[:, 0] - 0.8) / 0.25) ** 2)
    nr = neumann_residual(arc_nk, psi, [0.3], tolerance=1e-2)
    ok = mass_worst <= 1e-3 and rv.passed and nr.passed
    report(4, ok,
           f"mass err {mass_worst:.2e} (tol 1e-3); reproducing residual "
           f"{rv.residual:.2e} (tol 1e-2); boundary-condition residual "
           f"{nr.residual:.2e} (tol 1e-2)")


def test_criterion_05_series_behavior(circle_ev, sphere_ev, arc, cap):
    agree_worst, rho_worst = 0.0, 0.0
    for ev, omega, targets, bc in (
            (circle_ev, arc, np.array([[0.3], [0.8]]), 2),
            (sphere_ev, cap, np.array([[0.3, 0.5], [0.6, 2.0]]), 32)):
        system = LayerSystem(ev, omega, None, TimeGrid(0.5, 48, 2.0), bc)
        tab_s = system.series(targets)
        tab_m = system.march(targets)
        denom = float(np.max(np.abs(tab_m.values)))
        agree_worst = max(agree_worst, float(
            np.max(np.abs(tab_s.values - tab_m.values))) / denom)
        norms = tab_s.order_norms
        rho_worst = max(rho_worst,
                        max(norms[j + 1] / norms[j]
                            for j in range(2, len(norms) - 1)))
    # step-halving: the change is controlled by the coarse-grid error
    x, y, t = np.array([0.5]), np.array([[1.0]]), 0.4
    q_vals = {}
    for K in (72, 144):
        nk = NeumannKernel(circle_ev, arc, TimeGrid(1.0, K, 2.0), 2, 24)
        q_vals[K] = float(nk.q_profile(x, y, t)[0])
    exact = float(exact_interval_kernel(HALF_PI, 0.5, 1.0, t))
    err_coarse = abs(q_vals[72] - exact)
    change = abs(q_vals[72] - q_vals[144])
    ok = agree_worst <= 1e-8 and rho_worst < 1.0 \
        and change <= 3.0 * err_coarse
    report(5, ok,
           f"series/march agreement {agree_worst:.2e} (tol 1e-8); decay "
           f"ratio {rho_worst:.3f} < 1 beyond j=2; step-halving change "
           f"{change:.2e} <= 3x coarse error {err_coarse:.2e}")


@pytest.fixture(scope="module")
def arc_vlb_fits(arc_nk):
    base = fit_bound(arc_nk.q_profile, arc_nk.omega,
                     GaussianBoundSpec("lower-vlb", 1.0),
                     default_grid(arc_nk.omega, 12, 12, 6, 1.0, 0.02))
    dbl = fit_bound(arc_nk.q_profile, arc_nk.omega,
                    GaussianBoundSpec("lower-vlb", 1.0),
                    default_grid(arc_nk.omega, 24, 24, 12, 1.0, 0.02))
    return base, dbl


@pytest.fixture(scope="module")
def cap_grids(cap_nk):
    return (default_grid(cap_nk.omega, 12, 12, 6, 1.0, 0.02),
            default_grid(cap_nk.omega, 24, 24, 12, 1.0, 0.02))


def test_criterion_06_lower_bound_theorem(arc_nk, cap_nk, arc_vlb_fits,
                                          cap_grids):
    arc_base, arc_dbl = arc_vlb_fits
    spec = GaussianBoundSpec("lower-vlb", 1.0)
    cap_base = fit_bound(cap_nk.q_profile, cap_nk.omega, spec, cap_grids[0])
    cap_dbl = fit_bound(cap_nk.q_profile, cap_nk.omega, spec, cap_grids[1])
    drift_arc = abs(arc_dbl.constant - arc_base.constant) / arc_base.constant
    drift_cap = abs(cap_dbl.constant - cap_base.constant) / cap_base.constant
    pipe_arc = proof_pipeline_check(arc_nk, horizon=1.0)
    pipe_cap = proof_pipeline_check(cap_nk, horizon=1.0)
    ok = arc_base.constant > 0 and cap_base.constant > 0 \
        and drift_arc < 0.10 and drift_cap < 0.10 \
        and pipe_arc.all_passed and pipe_cap.all_passed
    report(6, ok,
           f"arc c {arc_base.constant:.4f} (drift {drift_arc:.1%}), cap c "
           f"{cap_base.constant:.4f} (drift {drift_cap:.1%}, tol 10%); "
           f"pipeline arc {'all-pass' if pipe_arc.all_passed else 'FAIL'}, "
           f"cap {'all-pass' if pipe_cap.all_passed else 'FAIL'}")


def test_criterion_07_hypothesis_suite(arc, cap, sphere):
    results = []
    for omega in (arc, cap):
        vlb = check_vlb(omega, [0.1, 0.3, 0.6], count=32)
        dp = check_dp(omega, [(0.1, 0.2), (0.2, 0.4), (0.3, 0.6)],
                      count=32)
        pts = sample_domain(omega, 8, seed=2)
        cc = check_cc(omega, list(zip(pts[:4], pts[4:])))
        results.append(all(v.passed and v.stable is not False
                           and all(np.isfinite(list(v.constants.values())).
                                   tolist())
                           for v in (vlb, dp, cc)))
    slit = DomainSpec(sphere, ("slit-cap", 1.2, 0.15, 0.05))
    cc_bad = check_cc(slit, [(np.array([1.0, math.pi - 0.4]),
                              np.array([1.0, math.pi + 0.4]))])
    per_k = cc_bad.witness["constants_by_k"]
    ks = sorted(per_k)
    growing = per_k[ks[-1]] > 1.25 * per_k[ks[-3]]
    comp = DomainSpec(sphere, ("cap-complement", 1.0))
    cone = check_interior_cone(comp, 0.5, 0.3, count=16)
    ok = all(results) and not cc_bad.passed and growing and cone.passed
    report(7, ok,
           f"arc/cap VLB+DP+CC pass {results}; slit-cap CC fails with "
           f"growing C {per_k[ks[0]]:.2f}->{per_k[ks[-1]]:.2f}; "
           f"cap-complement (1/2,0.3)-cone pass={cone.passed} "
           f"(c0 {cone.constants['c0']:.3f})")


def test_criterion_08_negative_control(arc_nk):
    def dirichlet_profile(x, ys, t):
        ys = np.atleast_2d(np.asarray(ys, float))
        return np.asarray(exact_interval_dirichlet_kernel(
            HALF_PI, float(np.ravel(x)[0]), ys[:, 0], t))

    eps = 0.002  # boundary-adjacent nodes, within the 0.02 window
    xs = np.array([[eps], [0.05], [0.4], [1.0], [HALF_PI - eps]])
    ts = np.array([0.05, 0.2, 1.0])
    rep = fit_bound(dirichlet_profile, arc_nk.omega,
                    GaussianBoundSpec("lower-vlb", 1.0), (xs, xs, ts))
    nodes = arc_nk.volume_nodes
    psi = np.exp(-((nodes[:, 0] - 0.8) / 0.25) ** 2)

    def dirichlet_q(x, y, t):
        return float(exact_interval_dirichlet_kernel(
            HALF_PI, float(np.ravel(x)[0]), float(np.ravel(y)[0]), t))
    nr = neumann_residual(arc_nk, psi, [0.3], q_fn=dirichlet_q)
    ok = rep.constant < 1e-6 and not nr.passed and nr.residual > 0.1
    report(8, ok,
           f"wrong-boundary-condition fit collapses to c {rep.constant:.2e}"
           f" (tol < 1e-6); boundary residual {nr.residual:.2f} = O(1) "
           "detected")


def test_criterion_09_euclidean_lower_corollary(cap_nk, cap_grids):
    spec = GaussianBoundSpec("lower-euclid", 1.0)
    base = fit_bound(cap_nk.q_profile, cap_nk.omega, spec, cap_grids[0])
    dbl = fit_bound(cap_nk.q_profile, cap_nk.omega, spec, cap_grids[1])
    drift = abs(dbl.constant - base.constant) / base.constant
    ok = base.constant > 0 and drift < 0.10
    report(9, ok,
           f"cap flat-Gaussian lower fit c {base.constant:.4f} > 0, "
           f"refinement drift {drift:.1%} (tol 10%)")


def test_criterion_10_upper_bound_fits(arc_nk):
    grid = default_grid(arc_nk.omega, 12, 12, 6, 1.0, 0.02)
    grid2 = default_grid(arc_nk.omega, 24, 24, 12, 1.0, 0.02)
    prod, geo = upper_volume_fit(arc_nk.q_profile, arc_nk.omega, grid)
    _, geo2 = upper_volume_fit(arc_nk.q_profile, arc_nk.omega, grid2)
    drift = abs(geo2.constant - geo.constant) / geo.constant
    ok = math.isfinite(prod.constant) and math.isfinite(geo.constant) \
        and drift < 0.10
    report(10, ok,
           f"volume-product C {prod.constant:.4f}, geometric-mean C "
           f"{geo.constant:.4f}, geomean refinement drift {drift:.1%} "
           "(tol 10%)")
