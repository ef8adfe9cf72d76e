import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmcflab import geom
from lmcflab import surface as sf
from lmcflab.errors import DegenerateGrid


def _roundtrip(s):
    return sf.state_from_dict(sf.state_to_dict(s))


def test_plane_mesh_samples():
    m = sf.plane_mesh(geom.rotated_real_plane(0.3), 2.0, 11)
    S = sf.embed(m)
    assert np.allclose(S.theta, 0.3)
    assert np.abs(S.H).max() < 1e-12
    assert S.dA.sum() == pytest.approx(16.0)


def test_lawlor_samples_are_special():
    V = geom.canonical_pair()
    S = sf.lawlor_samples(V, 0.2, 3.0)
    assert np.allclose(S.theta, V.theta_V, atol=1e-12)
    assert S.omega_defect().max() < 1e-12


def test_lawlor_mesh_is_close_to_neck():
    V = geom.canonical_pair()
    m = sf.lawlor_mesh(V, 0.2, 3.0, 32)
    z, w = geom.neck_coordinates(V).zw(m.vertices)
    assert np.abs(z * w - 0.2).max() < 1e-12
    assert m.boundary.sum() == 2 * 32


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 3.0), st.integers(16, 64))
def test_circle_product_area(r, n):
    c = sf.CurveProduct(sf.circle(r, n), sf.circle(1.0, n))
    S = sf.embed(c)
    # area weights are products of polygon dual lengths
    perim = 2 * n * math.sin(math.pi / n)
    assert S.dA.sum() == pytest.approx(perim * r * perim, rel=1e-12)
    assert not S.graded


def test_state_roundtrip_is_bit_exact():
    rng = np.random.default_rng(5)
    states = [
        sf.plane_mesh(geom.real_plane(), 1.0, 5),
        sf.CurveProduct(sf.circle(1.0, 16) + 1e-3 * rng.standard_normal(16), sf.circle(0.7, 12)),
        sf.sector_profile(0.5, 0.4, 8.0, 101),
        sf.cartesian_graph(geom.real_plane(), lambda x, y: 0.1 * x * y + rng.random(x.shape) * 1e-9,
                           2.0, 9),
    ]
    for s in states:
        t = _roundtrip(s)
        a, b = sf.embed(s), sf.embed(t)
        assert np.array_equal(a.x, b.x)


def test_potential_graph_is_exactly_lagrangian():
    g = sf.cartesian_graph(geom.real_plane(), lambda x, y: 0.2 * x * x - 0.1 * x * y + 0.05 * y ** 3,
                           1.0, 21)
    S = sf.embed(g)
    assert S.omega_defect().max() < 1e-10


def test_potential_graph_rejects_bad_shape():
    with pytest.raises(DegenerateGrid):
        sf.PotentialGraph(geom.real_plane(), np.arange(3.0), np.arange(4.0), np.zeros((3, 3)))


def test_sector_profile_geometry():
    p = sf.sector_profile(0.5, 0.4, 8.0, 201)
    g = p.gamma
    assert abs(g[0]) == pytest.approx(8.0) and abs(g[-1]) == pytest.approx(8.0)
    assert np.angle(g[0]) - np.angle(g[-1]) == pytest.approx(math.pi / 2 + 0.4)
    # symmetric about the diagonal
    assert p.rmin == pytest.approx(math.sqrt(2 * 0.5), rel=0.05)


def test_bump_profile_keeps_ends_and_breaks_symmetry():
    p = sf.sector_profile(0.5, 0.4, 8.0, 201)
    q = sf.bump_profile(p, 0.3)
    assert q.gamma[0] == p.gamma[0] and q.gamma[-1] == p.gamma[-1]
    k = int(np.argmin(np.abs(p.gamma)))
    assert np.array_equal(q.gamma[k:], p.gamma[k:])
    assert np.abs(q.gamma[:k] - p.gamma[:k]).max() > 0.1


def test_lawlor_profile_angle_constant():
    p = sf.lawlor_profile(0.3, 5.0, 401)
    th = p.theta()
    assert np.ptp(th[5:-5]) < 1e-2


def test_refine_keeps_nodes():
    g = sf.cartesian_graph(geom.real_plane(), lambda x, y: 0.1 * x * y, 1.0, 5)
    r = sf.refine(g)
    assert np.array_equal(r.f[::2, ::2], g.f)
    c = sf.CurveProduct(sf.circle(1.0, 8), sf.circle(1.0, 8))
    rc = sf.refine(c)
    assert np.array_equal(rc.gamma1[::2], c.gamma1)


def test_off4_roundtrip(tmp_path):
    m = sf.lawlor_mesh(geom.canonical_pair(), 0.2, 2.0, 16)
    sf.write_off4(m, tmp_path / "m.off4")
    m2 = sf.read_off4(tmp_path / "m.off4")
    assert np.array_equal(m.vertices, m2.vertices) and np.array_equal(m.faces, m2.faces)


def test_graphicality_of_pair_and_plane():
    V = geom.canonical_pair()
    S = sf.pair_samples(V, 3.0)
    assert sf.graphicality_detect(S, V, 1.0, 2.0) is not None
    P = sf.plane_samples(geom.real_plane(), 3.0)
    assert sf.graphicality_detect(P, V, 1.0, 2.0) is None
