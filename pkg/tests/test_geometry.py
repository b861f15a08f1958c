import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatlayer.errors import DomainValidationError
from heatlayer.geometry import (
    ConeSpec, DomainSpec, ManifoldModel, ball_volume, chain_points,
    cone_volume, cutlocus_distance, distance, geodesic, log_direction,
    manifold_quadrature, relative_ball_volume, s_kappa, sphere_measure,
    tangent, wrap_angle,
)

ANGLES = st.floats(-10.0, 10.0, allow_nan=False)


@given(ANGLES)
def test_wrap_angle_range_and_identity(a):
    w = wrap_angle(a)
    assert -math.pi <= w <= math.pi
    assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-12)
    assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-12)


@given(ANGLES, ANGLES)
def test_circle_distance_symmetric_and_bounded(a, b):
    m = ManifoldModel.circle(1.0)
    d = distance(m, [a], [b])
    assert d == pytest.approx(distance(m, [b], [a]), rel=1e-12)
    assert 0.0 <= d <= math.pi + 1e-12


@given(st.floats(0.05, math.pi - 0.05), st.floats(0.0, 2 * math.pi),
       st.floats(0.05, math.pi - 0.05), st.floats(0.0, 2 * math.pi))
@settings(max_examples=60)
def test_sphere_distance_triangle_inequality(c1, a1, c2, a2):
    m = ManifoldModel.sphere2(1.0)
    x, y = np.array([c1, a1]), np.array([c2, a2])
    z = np.array([0.5 * (c1 + c2), 0.5 * (a1 + a2)])
    assert distance(m, x, y) <= distance(m, x, z) + distance(m, z, y) + 1e-9


@pytest.mark.parametrize("kind", ["circle", "sphere2", "flat-torus2"])
def test_geodesic_arclength_matches_distance(kind):
    if kind == "circle":
        m, x = ManifoldModel.circle(1.0), np.array([0.3])
        e = np.array([1.0])
    elif kind == "sphere2":
        m, x = ManifoldModel.sphere2(1.0), np.array([1.0, 0.5])
        e = np.array([1.0, 0.0])
    else:
        m = ManifoldModel.flat_torus2(2 * math.pi, 2 * math.pi)
        x, e = np.array([1.0, 2.0]), np.array([0.6, 0.8])
    for s in (0.1, 0.5, 1.2):
        y = geodesic(m, tangent(m, x, e), s)
        assert distance(m, x, y) == pytest.approx(s, rel=1e-9)


def test_log_direction_inverts_geodesic():
    m = ManifoldModel.sphere2(1.0)
    x, y = np.array([0.8, 0.2]), np.array([1.4, 1.1])
    td, d = log_direction(m, x, y)
    z = geodesic(m, td, d)
    assert distance(m, z, y) < 1e-9


def test_cutlocus_distances():
    circ = ManifoldModel.circle(1.0)
    assert cutlocus_distance(circ, tangent(circ, [0.0], [1.0])) \
        == pytest.approx(math.pi)
    sph = ManifoldModel.sphere2(2.0)
    assert cutlocus_distance(sph, tangent(sph, [0.5, 0.0], [1.0, 0.0])) \
        == pytest.approx(2.0 * math.pi)


@given(st.floats(0.01, 3.0))
@settings(max_examples=40)
def test_ball_volume_monotone_in_radius(r):
    m = ManifoldModel.sphere2(1.0)
    x = np.array([1.0, 0.0])
    assert ball_volume(m, x, r) <= ball_volume(m, x, r + 0.1) + 1e-12


def test_ball_volume_small_radius_euclidean():
    x = np.array([1.2, 0.7])
    for m, ref in ((ManifoldModel.sphere2(1.0), math.pi * 0.01 ** 2),
                   (ManifoldModel.flat_torus2(2 * math.pi, 2 * math.pi),
                    math.pi * 0.01 ** 2)):
        assert ball_volume(m, x, 0.01) == pytest.approx(ref, rel=1e-3)


def test_relative_ball_volume_at_most_ambient(arc):
    x = np.array([0.4])
    for r in (0.1, 0.5, 1.0):
        rel = relative_ball_volume(arc, x, r)
        amb = ball_volume(arc.manifold, x, r)
        assert 0.0 < rel <= amb + 1e-12
        assert rel <= arc.volume + 1e-12


def test_relative_ball_volume_cap_interior_matches_ambient(cap):
    # a small ball around the cap center never meets the rim
    x = np.array([0.1, 0.0])
    assert relative_ball_volume(cap, x, 0.2) \
        == pytest.approx(ball_volume(cap.manifold, x, 0.2), rel=1e-6)


def test_s_kappa_limits():
    assert s_kappa(0.0, 0.7, 2) == pytest.approx(0.7)
    assert s_kappa(1.0, 0.7, 2) == pytest.approx(math.sin(0.7))
    assert s_kappa(-1.0, 0.7, 2) == pytest.approx(math.sinh(0.7))
    assert sphere_measure(1) == pytest.approx(2.0)
    assert sphere_measure(2) == pytest.approx(2 * math.pi)


def test_domain_validation_rejects_mismatches():
    circ = ManifoldModel.circle(1.0)
    with pytest.raises(DomainValidationError):
        DomainSpec(circ, ("cap", 1.0))
    with pytest.raises(DomainValidationError):
        DomainSpec(circ, ("arc", 0.0, 7.0))


def test_arc_contains_and_normal(arc):
    assert arc.contains([0.5])
    assert not arc.contains([-0.1])
    assert not arc.contains([0.0])
    assert arc.contains([0.0], closure=True)
    nu = arc.outward_normal([0.0])
    assert nu.dir[0] == pytest.approx(-1.0)
    nu = arc.outward_normal([math.pi / 2])
    assert nu.dir[0] == pytest.approx(1.0)


def test_cap_volume_and_boundary_measure(cap):
    # cap z > 1/2 on the unit sphere: area 2*pi*(1 - 1/2), rim length
    # 2*pi*sin(pi/3)
    assert cap.volume == pytest.approx(math.pi, rel=1e-12)
    assert cap.boundary_measure == pytest.approx(
        2 * math.pi * math.sin(math.pi / 3), rel=1e-12)


def test_volume_quadrature_integrates_constants(arc, cap):
    for omega in (arc, cap):
        pts, w = omega.volume_quadrature(24)
        assert all(omega.contains(p) for p in pts)
        assert float(np.sum(w)) == pytest.approx(omega.volume, rel=1e-10)


def test_manifold_quadrature_total_mass():
    for m in (ManifoldModel.circle(1.0), ManifoldModel.sphere2(1.0),
              ManifoldModel.flat_torus2(3.0, 5.0)):
        pts, w = manifold_quadrature(m, 32)
        assert float(np.sum(w)) == pytest.approx(m.total_volume, rel=1e-9)


def test_chain_points_stay_inside_and_reach(arc):
    res = chain_points(arc.manifold, arc, np.array([0.2]),
                       np.array([1.3]), 4)
    assert res.ok
    assert len(res.points) == 5
    assert all(arc.contains(p, closure=True) for p in res.points)
    d_direct = distance(arc.manifold, [0.2], [1.3])
    assert res.max_step <= d_direct


def test_cone_volume_flat_sector():
    m = ManifoldModel.flat_torus2(2 * math.pi, 2 * math.pi)
    cone = ConeSpec((1.0, 1.0), 0.5, 0.25, 0.0)
    assert cone_volume(m, cone) == pytest.approx(
        0.25 * math.pi * 0.5 ** 2, rel=1e-3)


@given(st.integers(2, 10))
@settings(max_examples=20)
def test_cone_directions_count_and_unit(k):
    m = ManifoldModel.flat_torus2(2 * math.pi, 2 * math.pi)
    cone = ConeSpec((0.5, 0.5), 0.3, 0.5, 0.1)
    dirs = cone.directions(m, k)
    assert len(dirs) == k
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
