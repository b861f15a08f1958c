import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatlayer.errors import ConfigurationError
from heatlayer.layer import (
    BoundaryQuadrature, LayerSystem, TimeGrid, boundary_convolution_bound_audit,
    normal_derivative_bound_audit, r1_eval,
)

HALF_PI = math.pi / 2.0


@given(st.floats(0.1, 5.0), st.integers(2, 200), st.floats(1.0, 3.0))
@settings(max_examples=50)
def test_time_grid_invariants(T, K, gamma):
    tg = TimeGrid(T, K, gamma)
    nodes = tg.nodes
    assert len(nodes) == K
    assert nodes[-1] == pytest.approx(T)
    assert np.all(np.diff(nodes) > 0)
    assert np.all(np.diff(np.diff(tg.nodes0)) > -1e-12)  # graded: widening
    assert tg.nodes0[0] == 0.0


def test_time_grid_rejects_bad_parameters():
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, 10)
    with pytest.raises(ConfigurationError):
        TimeGrid(1.0, 1)
    with pytest.raises(ConfigurationError):
        TimeGrid(1.0, 10, 0.5)


def test_boundary_quadrature_total_measure(arc, cap):
    for omega, count in ((arc, 2), (cap, 48)):
        bq = BoundaryQuadrature.build(omega, count)
        assert float(np.sum(bq.weights)) \
            == pytest.approx(omega.boundary_measure, rel=1e-12)
        for z in bq.nodes:
            assert omega.contains(z, closure=True)
            assert not omega.contains(z)


def test_first_order_kernel_sign_and_decay(circle_ev, arc):
    # the outward normal derivative of p decays as the source recedes
    y_near, y_far = np.array([0.1]), np.array([0.8])
    t = 0.01
    v_near = abs(r1_eval(circle_ev, arc, np.array([0.0]), y_near, t))
    v_far = abs(r1_eval(circle_ev, arc, np.array([0.0]), y_far, t))
    assert v_near > v_far > 0


def test_series_and_march_agree(circle_ev, arc):
    targets = np.array([[0.3], [0.7], [1.2]])
    tg = TimeGrid(0.5, 64, 2.0)
    system = LayerSystem(circle_ev, arc, None, tg, 2)
    tab_s = system.series(targets)
    tab_m = system.march(targets)
    denom = float(np.max(np.abs(tab_m.values)))
    assert np.max(np.abs(tab_s.values - tab_m.values)) / denom <= 1e-8


def test_series_orders_decay(circle_ev, arc):
    system = LayerSystem(circle_ev, arc, None, TimeGrid(0.5, 64, 2.0), 2)
    tab = system.series(np.array([[0.5]]))
    norms = tab.order_norms
    assert len(norms) >= 4
    for j in range(2, len(norms) - 1):
        assert norms[j + 1] < norms[j]


def test_table_interpolation_hits_nodes_and_vanishes_at_zero(circle_ev, arc):
    system = LayerSystem(circle_ev, arc, None, TimeGrid(0.5, 48, 2.0), 2)
    tab = system.march(np.array([[0.4]]))
    k = 20
    tk = tab.time_grid.nodes[k]
    assert np.allclose(tab.interp_in_time(tk), tab.values[:, :, k])
    assert np.allclose(tab.interp_in_time(0.0), 0.0)


def test_single_layer_batch_matches_scalar_route(circle_ev, arc):
    system = LayerSystem(circle_ev, arc, None, TimeGrid(0.5, 48, 2.0), 2)
    tab = system.march(np.array([[0.4], [1.0]]))
    sources = np.array([[0.3], [0.8], [1.3]])
    t = 0.3
    batch = system.single_layer_batch(tab, sources, t)
    assert batch.shape == (3, 2)
    for i, x in enumerate(sources):
        row = system.single_layer(tab, x, t)
        assert np.allclose(batch[i], row, rtol=1e-12, atol=1e-15)


def test_march_halved_step_consistency(circle_ev, arc):
    """Halving the time step moves the answer by no more than a few
    times the coarse-grid self-estimate (first-order behavior)."""
    targets = np.array([[0.6]])
    coarse = LayerSystem(circle_ev, arc, None, TimeGrid(0.5, 32, 2.0), 2)
    fine = LayerSystem(circle_ev, arc, None, TimeGrid(0.5, 64, 2.0), 2)
    tc = coarse.march(targets)
    tf = fine.march(targets)
    t_eval = 0.4
    vc = tc.interp_in_time(t_eval)
    vf = tf.interp_in_time(t_eval)
    scale = float(np.max(np.abs(vf)))
    assert np.max(np.abs(vc - vf)) / scale < 0.05


def test_normal_derivative_bound_audit_finite_on_cap(sphere_ev, cap):
    rim = BoundaryQuadrature.build(cap, 8).nodes
    field = np.array([[0.4, 0.0], [0.7, 1.0], [0.95, 2.0]])
    out = normal_derivative_bound_audit(sphere_ev, cap, 0.75, rim, field,
                                        [0.01, 0.05, 0.2])
    assert math.isfinite(out["constant"])
    assert out["constant"] > 0


def test_boundary_convolution_bound_audit_branches(cap):
    rim = BoundaryQuadrature.build(cap, 16).nodes
    pairs = [(rim[0], rim[5]), (rim[2], rim[9])]
    strong = boundary_convolution_bound_audit(cap, 0.6, 0.6, pairs)
    weak = boundary_convolution_bound_audit(cap, 0.2, 0.2, pairs)
    assert strong["branch"] == "distance-power"
    assert weak["branch"] == "bounded"
    assert math.isfinite(strong["constant"])
    assert math.isfinite(weak["constant"])
    with pytest.raises(ConfigurationError):
        boundary_convolution_bound_audit(cap, 0.5, 0.5, pairs)
