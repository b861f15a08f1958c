import math

import numpy as np
import pytest

from heatlayer.ambient import KernelEvaluator
from heatlayer.geometry import DomainSpec, ManifoldModel
from heatlayer.kernel import NeumannKernel
from heatlayer.layer import TimeGrid

HALF_PI = math.pi / 2.0


@pytest.fixture(scope="session")
def circle():
    return ManifoldModel.circle(1.0)


@pytest.fixture(scope="session")
def sphere():
    return ManifoldModel.sphere2(1.0)


@pytest.fixture(scope="session")
def torus():
    return ManifoldModel.flat_torus2(2.0 * math.pi, 2.0 * math.pi)


@pytest.fixture(scope="session")
def arc(circle):
    return DomainSpec(circle, ("arc", 0.0, HALF_PI))


@pytest.fixture(scope="session")
def cap(sphere):
    # spherical cap z > 1/2, i.e. colatitude < pi/3
    return DomainSpec(sphere, ("cap", math.acos(0.5)))


@pytest.fixture(scope="session")
def circle_ev(circle):
    return KernelEvaluator(circle)


@pytest.fixture(scope="session")
def sphere_ev(sphere):
    return KernelEvaluator(sphere)


@pytest.fixture(scope="session")
def torus_ev(torus):
    return KernelEvaluator(torus)


@pytest.fixture(scope="session")
def arc_nk(circle_ev, arc):
    return NeumannKernel(circle_ev, arc, TimeGrid(1.0, 144, 2.0),
                         boundary_count=2, volume_order=24)


@pytest.fixture(scope="session")
def cap_nk(sphere_ev, cap):
    return NeumannKernel(sphere_ev, cap, TimeGrid(1.0, 96, 2.0),
                         boundary_count=64, volume_order=16)


def interior_arc_points(count, margin=0.08):
    """Arc points at least `margin` from either endpoint."""
    return np.linspace(margin, HALF_PI - margin, count)[:, None]
