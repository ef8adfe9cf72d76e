import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmcflab import diagnostics as dg
from lmcflab import geom
from lmcflab import surface as sf
from lmcflab.errors import DomainError, IllConditioned, NotSpecial


@pytest.fixture(scope="module")
def V0():
    return geom.canonical_pair()


@pytest.fixture(scope="module")
def pair10(V0):
    return sf.pair_samples(V0, 10.0)


def test_excess_of_pair_vanishes(pair10):
    r = dg.excess(pair10)
    assert abs(r.A) < 1e-9
    assert r.theta_l2_term == pytest.approx(0.0, abs=1e-20)


def test_excess_of_plane_is_minus_4pi():
    r = dg.excess(sf.plane_samples(geom.real_plane(), 10.0))
    assert r.A == pytest.approx(-4 * math.pi, abs=1e-6)
    assert r.A_alpha < 0


def test_lawlor_neck_has_negative_excess(V0):
    r = dg.excess(sf.lawlor_samples(V0, 0.2, 10.0, n_s=401))
    assert r.A < -r.tail_bound


def test_theta0_is_weighted_mean():
    S = sf.embed(sf.cartesian_graph(geom.real_plane(), lambda x, y: 0.1 * x ** 3 + 0.05 * y * y,
                                    3.0, 41))
    r = dg.excess(S, C1=dg.C1_AREA_DEFAULT)
    w = np.exp(-np.sum(S.x ** 2, 1) / 4) * S.dA
    assert r.theta0_star == pytest.approx(np.sum(w * S.theta) / np.sum(w), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.3, 0.3), st.floats(0.05, 1.0))
def test_excess_alpha_has_sign_of_excess(amp, alpha):
    V0 = geom.canonical_pair()
    parts = [sf.embed(sf.cartesian_graph(P, lambda x, y: amp * x * y * np.exp(-(x * x + y * y) / 8),
                                         4.0, 33)) for P in (V0.p1, V0.p2)]
    r = dg.excess(sf.SampleSet.concat(parts), alpha=alpha)
    assert math.copysign(1, r.A_alpha) == math.copysign(1, r.A)
    assert abs(r.A_alpha) == pytest.approx(abs(r.A) ** alpha)


def test_ungraded_excess_is_nan():
    c = sf.CurveProduct(sf.circle(1.0, 32), sf.circle(1.0, 32))
    assert math.isnan(dg.excess(sf.embed(c)).A)


def test_distance_to_own_pair(V0, pair10):
    assert dg.dist_IV(pair10, V0) < 1e-12
    rep = dg.dist_DV(pair10, V0, report=True)
    assert rep.graphical and rep.D_V < 1e-12


def test_distance_needs_special_pair(pair10):
    V = geom.PlanePair(geom.real_plane(), geom.rotated_real_plane(0.5))
    with pytest.raises(NotSpecial):
        dg.dist_IV(pair10, V)


def test_plane_is_not_graphical_over_pair(V0):
    S = sf.plane_samples(geom.real_plane(), 4.0)
    assert dg.dist_DV(S, V0) == math.inf


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_zw_equivalence(seed):
    rng = np.random.default_rng(seed)
    V = geom.random_special_pair(rng)
    nc = geom.neck_coordinates(V)
    f = dg.zw_field(rng.standard_normal((500, 4)), nc)
    assert 0.2 <= f.ratio_min and f.ratio_max <= 2.0
    assert f.identity_error < 1e-14


def test_graphicality_radius():
    assert dg.graphicality_radius(0.1, 2.0) == pytest.approx(math.sqrt(8 * math.log(100)))
    with pytest.raises(DomainError):
        dg.graphicality_radius(2.0, 2.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 3.0), st.integers(8, 64))
def test_loop_integral_of_circle(r, n):
    # a circle in the z1 line bounds a disc of symplectic area pi r^2
    a = 2 * np.pi * np.arange(n) / n
    P = np.zeros((n, 4))
    P[:, 0], P[:, 1] = r * np.cos(a), r * np.sin(a)
    assert abs(dg.loop_integral(P, "spectral")) == pytest.approx(2 * math.pi * r * r, rel=1e-12)
    poly = n * r * r * math.sin(2 * math.pi / n)
    assert abs(dg.loop_integral(P, "polygon")) == pytest.approx(poly, rel=1e-12)


@pytest.mark.parametrize("eps", [0.2, -0.05, 0.5])
def test_lawlor_core_is_exact(V0, eps):
    assert abs(dg.loop_integral(dg.lawlor_core_loop(V0, eps))) < 1e-12


def test_torus_is_not_exact():
    c = sf.CurveProduct(sf.circle(1.0, 64), sf.circle(1.0, 64))
    res = dg.liouville_primitive(c, discreteness=2 * math.pi)
    assert not res.exact and res.rational
    for v in res.loops.values():
        assert abs(v) == pytest.approx(2 * math.pi, abs=1e-9)


def test_potential_graph_primitive_is_exact():
    g = sf.polar_graph(geom.real_plane(), lambda x, y: 0.1 * x * y, 0.5, 2.0, 9, 32)
    assert dg.liouville_primitive(g).exact


def test_lawlor_fit_recovers_eps(V0):
    S = sf.lawlor_samples(V0, 0.3, 3.0)
    r = dg.lawlor_fit(S, V0)
    assert r.eps.real == pytest.approx(0.3, rel=1e-12)
    assert r.sign == 1 and r.residual < 1e-12
    r2 = dg.lawlor_fit(sf.lawlor_samples(V0, -0.3, 3.0), V0)
    assert r2.sign == -1


def test_lawlor_fit_needs_coverage(V0):
    with pytest.raises(IllConditioned):
        dg.lawlor_fit(np.array([[1.0, 0, 0, 0], [2.0, 0, 0, 0]]), V0)


def test_best_fit_pair_recovers_rotation(V0):
    W = geom.special_pair([0.05, 0.03, 0.0, -0.02, 0.01])
    S = sf.pair_samples(W, 4.0, n_r=40, n_phi=48)
    fit = dg.best_fit_pair(S, V0)
    assert fit.improved and fit.I < 1e-4
    assert geom.pair_distance(fit.V, W) < 1e-3


def test_theta_oscillation_of_rotated_pair():
    V = geom.PlanePair(geom.real_plane(), geom.LagrangianPlane(
        geom.rotation_z1(0.3) @ geom.canonical_pair().p2.frame))
    S = sf.pair_samples(V, 3.0)
    assert dg.theta_oscillation(S) == pytest.approx(0.3, abs=1e-12)


def test_report_json_is_strict():
    r = dg.excess(sf.plane_samples(geom.real_plane(), 3.0))
    import json
    json.loads(dg.dumps(r))
