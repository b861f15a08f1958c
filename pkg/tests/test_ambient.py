import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatlayer.ambient import ComparatorParams, eval_E, log_E
from heatlayer.errors import TimeDomainError
from heatlayer.geometry import ManifoldModel, distance, manifold_quadrature


def brute_image_sum_circle(d, t, length, images=60):
    """Independent wrapped-Gaussian oracle for the circle kernel."""
    ks = np.arange(-images, images + 1)
    return float(np.sum(np.exp(-(d + ks * length) ** 2 / (4 * t))
                        / math.sqrt(4 * math.pi * t)))


@given(st.floats(0.0, math.pi), st.floats(0.01, 2.0))
@settings(max_examples=60, deadline=None)
def test_circle_kernel_matches_image_sum(circle_ev, d, t):
    p = circle_ev.eval_p([0.0], [d], t)
    ref = brute_image_sum_circle(d, t, 2 * math.pi)
    assert p == pytest.approx(ref, rel=1e-10)


def test_torus_kernel_is_product_of_circles(torus_ev, circle_ev):
    x, y, t = np.array([0.3, 1.1]), np.array([2.0, 0.4]), 0.07
    p = torus_ev.eval_p(x, y, t)
    ref = circle_ev.eval_p([x[0]], [y[0]], t) \
        * circle_ev.eval_p([x[1]], [y[1]], t)
    assert p == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("t", [0.05, 0.1, 1.0, 10.0])
def test_sphere_kernel_total_mass_one(sphere_ev, t):
    m = sphere_ev.manifold
    pts, w = manifold_quadrature(m, 64)
    x0 = np.array([1.1, 0.3])
    total = float(np.dot(w, sphere_ev.p_matrix(pts, x0[None, :], t)[:, 0]))
    assert total == pytest.approx(1.0, rel=1e-6)


def test_sphere_kernel_symmetry_and_positivity(sphere_ev):
    x, y = np.array([0.4, 0.1]), np.array([2.2, 2.9])
    for t in (0.005, 0.05, 0.5, 5.0):
        pxy = sphere_ev.eval_p(x, y, t)
        assert pxy > 0
        assert pxy == pytest.approx(sphere_ev.eval_p(y, x, t), rel=1e-10)


def test_p_matrix_agrees_with_scalar_eval(circle_ev, sphere_ev, torus_ev):
    rng = np.random.default_rng(3)
    for ev, dim, span in ((circle_ev, 1, 2 * math.pi),
                          (sphere_ev, 2, 3.0),
                          (torus_ev, 2, 2 * math.pi)):
        xs = rng.uniform(0.05, span - 0.05, size=(4, dim))
        ys = rng.uniform(0.05, span - 0.05, size=(5, dim))
        for t in (0.03, 0.4):
            mat = ev.p_matrix(xs, ys, t)
            for i, x in enumerate(xs):
                for j, y in enumerate(ys):
                    assert mat[i, j] == pytest.approx(
                        ev.eval_p(x, y, t), rel=1e-9)


def test_long_time_limits(circle_ev, sphere_ev):
    # equilibrium: p -> 1/|M|
    assert circle_ev.eval_p([0.2], [2.0], 60.0) \
        == pytest.approx(1.0 / (2 * math.pi), rel=1e-10)
    assert sphere_ev.eval_p([0.3, 0.0], [2.0, 1.0], 60.0) \
        == pytest.approx(1.0 / (4 * math.pi), rel=1e-10)


def test_comparator_rejects_nonpositive_time():
    with pytest.raises(TimeDomainError):
        eval_E(ComparatorParams(2), 0.3, 0.0)


@given(st.floats(0.01, 3.0), st.floats(0.001, 2.0))
@settings(max_examples=50)
def test_log_comparator_consistent(d, t):
    assert math.exp(log_E(2, d, t)) == pytest.approx(
        eval_E(ComparatorParams(2), d, t), rel=1e-10)


def domination_min_ratio(ev, pts, times):
    """min over the grid of p / E with E the flat comparator."""
    n = ev.manifold.dim
    worst = math.inf
    for t in times:
        for x in pts:
            for y in pts:
                d = distance(ev.manifold, x, y)
                ratio = ev.eval_p(x, y, t) / eval_E(n, d, t)
                worst = min(worst, ratio)
    return worst


def test_nonnegative_curvature_kernel_dominates_flat_comparator(
        circle_ev, torus_ev, sphere_ev):
    times = [0.05, 0.2, 0.5, 1.0, 2.0]
    th = np.linspace(0.0, 2 * math.pi, 9, endpoint=False)
    circle_pts = th[:, None]
    assert domination_min_ratio(circle_ev, circle_pts, times) >= 1.0 - 1e-10

    g = np.linspace(0.0, 2 * math.pi, 5, endpoint=False)
    torus_pts = np.array([[a, b] for a in g for b in g])
    assert domination_min_ratio(torus_ev, torus_pts, times) >= 1.0 - 1e-10

    colat = np.linspace(0.2, math.pi - 0.2, 5)
    azim = np.linspace(0.0, 2 * math.pi, 4, endpoint=False)
    sphere_pts = np.array([[c, a] for c in colat for a in azim])
    assert domination_min_ratio(sphere_ev, sphere_pts, times) >= 1.0 - 1e-3


def test_antipodal_decay_exponent(sphere_ev):
    reg = sphere_ev.antipodal_exponent(t_window=(0.01, 0.1))
    assert reg["slope"] == pytest.approx(-1.5, abs=0.05)
    assert math.exp(reg["intercept"]) > 0


def test_two_sided_comparator_fit(circle_ev, sphere_ev):
    for ev in (circle_ev, sphere_ev):
        fit = ev.two_sided_comparator_fit()
        assert fit.lower_holds
        assert fit.min_ratio_lower >= 1.0 - 1e-3
        assert math.isfinite(fit.c) and fit.c > 0


def test_near_diag_lower_reports_positive_floor(circle_ev, sphere_ev):
    for ev in (circle_ev, sphere_ev):
        nd = ev.near_diag_lower()
        assert nd["pass"]
        assert nd["eta"] > 0
        assert nd["flat_constant"] > 0
