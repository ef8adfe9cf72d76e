import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmcflab import geom, gaussquad
from lmcflab import surface as sf
from lmcflab.errors import MissingAreaRatio

C1 = 2.5 * math.pi


@pytest.fixture(scope="module")
def plane10():
    return sf.plane_samples(geom.real_plane(), 10.0)


def test_plane_density_is_one(plane10):
    r = gaussquad.gaussian_density(plane10, C1=C1)
    assert r.value == pytest.approx(1.0, abs=1e-10)
    assert r.tail_bound < 1e-8


def test_plane_gaussian_area(plane10):
    r = gaussquad.gaussian_integral(plane10, C1=C1)
    assert r.value == pytest.approx(4 * math.pi, rel=1e-10)


def test_truncation_needs_area_ratio(plane10):
    with pytest.raises(MissingAreaRatio):
        gaussquad.gaussian_integral(plane10)


@pytest.mark.parametrize("R", [3.0, 4.0, 6.0, 8.0])
def test_tail_bound_dominates_true_tail(R):
    # the plane tail beyond R is 4 pi exp(-R^2/4)
    true_tail = 4 * math.pi * math.exp(-R * R / 4)
    assert gaussquad.tail_bound(R, 1.0, C1) >= true_tail


@given(st.floats(1.0, 9.0), st.floats(0.0, 1.0))
def test_tail_bound_decreases_with_radius(R, dR):
    assert gaussquad.tail_bound(R + dR + 0.1, 1.0, C1) <= gaussquad.tail_bound(R, 1.0, C1)


def test_truncated_value_plus_tail_brackets_exact():
    s = sf.plane_samples(geom.real_plane(), 4.0)
    r = gaussquad.gaussian_integral(s, C1=C1)
    assert r.value <= 4 * math.pi <= r.value + r.tail_bound


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 3.0))
def test_density_is_scale_invariant(lam):
    s = sf.plane_samples(geom.rotated_real_plane(0.4), 20.0)
    a = gaussquad.gaussian_density(s, C1=C1).value
    b = gaussquad.rescaled_density(s, lam, C1=C1).value
    assert b == pytest.approx(a, abs=1e-8)


def test_entropy_of_plane_and_pair():
    s = sf.plane_samples(geom.real_plane(), 20.0)
    assert gaussquad.entropy(s) == pytest.approx(1.0, abs=1e-8)
    p = sf.pair_samples(geom.canonical_pair(), 20.0)
    assert gaussquad.entropy(p) == pytest.approx(2.0, abs=1e-8)


def test_fsum_is_order_independent():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(1000) * 10.0 ** rng.integers(-8, 8, 1000)
    assert gaussquad._fsum(a) == gaussquad._fsum(a[::-1]) == gaussquad._fsum(rng.permutation(a))
