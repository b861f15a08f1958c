import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatlayer.geometry import DomainSpec, ManifoldModel
from heatlayer.hypotheses import (
    check_cc, check_dp, check_interior_cone, check_strong_convexity,
    check_vgc, check_vlb, sample_domain,
)

HALF_PI = math.pi / 2.0


@pytest.fixture(scope="module")
def slit_cap(sphere):
    return DomainSpec(sphere, ("slit-cap", 1.2, 0.15, 0.05))


@pytest.fixture(scope="module")
def cap_complement(sphere):
    return DomainSpec(sphere, ("cap-complement", 1.0))


@given(st.integers(0, 5), st.integers(4, 24))
@settings(max_examples=20, deadline=None)
def test_sample_domain_contained_and_deterministic(arc, seed, count):
    a = sample_domain(arc, count, seed=seed)
    b = sample_domain(arc, count, seed=seed)
    assert np.array_equal(a, b)
    assert len(a) == count
    assert all(arc.contains(p) for p in a)


def test_sample_domain_has_near_boundary_stratum(cap):
    pts = sample_domain(cap, 30, seed=1)
    colat_c = cap.shape[1]
    near = sum(1 for p in pts if colat_c - p[0] < 0.15 * colat_c)
    assert near >= 5


def test_volume_lower_bound_on_arc_and_cap(arc, cap):
    for omega, radii in ((arc, [0.1, 0.3, 0.6]), (cap, [0.1, 0.3, 0.6])):
        v = check_vlb(omega, radii, count=32)
        assert v.passed
        assert v.constants["C"] > 0
        assert v.stable


def test_volume_lower_bound_constant_shrinks_with_more_samples(arc):
    small = check_vlb(arc, [0.2, 0.4], count=16, seed=0)
    large = check_vlb(arc, [0.2, 0.4], count=64, seed=0)
    assert large.constants["C"] <= small.constants["C"] + 1e-12


def test_doubling_property(arc, cap):
    pairs = [(0.1, 0.2), (0.2, 0.4), (0.3, 0.6)]
    for omega in (arc, cap):
        v = check_dp(omega, pairs, count=32)
        assert v.passed
        assert v.constants["C"] >= 1.0
        assert v.stable


def test_chain_condition_on_convex_domains(arc, cap):
    for omega, pairs in (
            (arc, [(np.array([0.2]), np.array([1.3]))]),
            (cap, [(np.array([0.9, 0.3]), np.array([0.9, math.pi]))])):
        v = check_cc(omega, pairs)
        assert v.passed
        assert v.constants["C"] < 3.0


def test_chain_condition_fails_on_slit_cap(slit_cap):
    x = np.array([1.0, math.pi - 0.4])
    y = np.array([1.0, math.pi + 0.4])
    v = check_cc(slit_cap, [(x, y)])
    assert not v.passed
    per_k = v.witness["constants_by_k"]
    ks = sorted(int(k) for k in per_k)
    # growing-constant witness: the chain constant blows up with k
    assert per_k[ks[-1]] > 1.25 * per_k[ks[-3]]


def test_strong_convexity_verdicts(arc, cap, cap_complement):
    assert check_strong_convexity(arc).passed
    assert check_strong_convexity(cap).passed       # colat pi/3 < pi/2
    assert not check_strong_convexity(cap_complement).passed


def test_torus_rectangle_convexity():
    m = ManifoldModel.flat_torus2(2 * math.pi, 2 * math.pi)
    small = DomainSpec(m, ("rect", 0.0, 2.0, 0.0, 2.0))
    big = DomainSpec(m, ("rect", 0.0, 5.0, 0.0, 5.0))
    assert check_strong_convexity(small).passed
    assert not check_strong_convexity(big).passed


def test_interior_cone_on_cap_complement(cap_complement):
    v = check_interior_cone(cap_complement, 0.5, 0.3, count=16)
    assert v.passed
    assert v.constants["c0"] > 0
    assert v.constants["min_fraction"] >= 0.5


def test_interior_cone_fails_for_greedy_fraction(cap_complement):
    v = check_interior_cone(cap_complement, 0.99, 0.3, count=16)
    assert not v.passed


def test_volume_growth_constants():
    circ = ManifoldModel.circle(1.0)
    v = check_vgc(circ, [0.3, 0.8, 1.5], count=12)
    assert v.passed
    # on the circle every ball of radius r < pi has measure exactly 2r
    assert v.constants["c1"] == pytest.approx(2.0, rel=1e-9)

    sph = ManifoldModel.sphere2(1.0)
    v2 = check_vgc(sph, [0.2, 0.5, 1.0], count=12)
    assert v2.passed
    # flat comparison: area(B_r)/r^2 <= pi, approached as r -> 0
    assert v2.constants["c1"] == pytest.approx(math.pi, rel=0.05)


def test_vgc_constant_never_decreases_with_samples():
    sph = ManifoldModel.sphere2(1.0)
    small = check_vgc(sph, [0.3, 0.7], count=8, seed=0)
    large = check_vgc(sph, [0.3, 0.7], count=32, seed=0)
    assert large.constants["c1"] >= small.constants["c1"] - 1e-12
