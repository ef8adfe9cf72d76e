import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmcflab import geom
from lmcflab.errors import Degenerate, NotLagrangian, NotSpecial, ZeroEps

angles = st.floats(-3.0, 3.0, allow_nan=False)
small = st.floats(-0.15, 0.15, allow_nan=False)


def test_kahler_form_is_compatible():
    J = geom.J_STD
    assert np.allclose(J @ J, -np.eye(4))
    assert np.allclose(geom.KAHLER_STD, -geom.KAHLER_STD.T)
    u, v = np.eye(4)[0], np.eye(4)[1]
    # omega(u, v) = <J u, v>
    assert geom.STANDARD.kahler(u, v) == pytest.approx((J @ u) @ v)


def test_real_plane_has_angle_zero():
    assert geom.lagrangian_angle(geom.real_plane()) == pytest.approx(0.0, abs=1e-15)


def test_mixed_frame_angle_is_plus_half_pi():
    P = geom.LagrangianPlane(np.array([[1.0, 0], [0, 0], [0, 0], [0, 1.0]]))
    assert geom.lagrangian_angle(P) == pytest.approx(math.pi / 2)


def test_non_lagrangian_plane_rejected():
    P = geom.LagrangianPlane(np.array([[1.0, 0], [0, 1.0], [0, 0], [0, 0]]))
    with pytest.raises(NotLagrangian):
        geom.lagrangian_angle(P)


def test_parallel_frame_is_degenerate():
    with pytest.raises(Degenerate):
        geom.LagrangianPlane.from_vectors([1, 0, 0, 0], [2, 0, 0, 0])


@given(angles)
def test_rotation_shifts_angle(phi):
    P = geom.rotated_real_plane(phi)
    assert geom.wrap_angle(geom.lagrangian_angle(P) - phi) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_symmetric_graph_angle(a, b, c):
    A = np.array([[a, b], [b, c]])
    P = geom.plane_from_symmetric(geom.real_plane(), A)
    assert P.omega_defect() < 1e-12
    d = geom.wrap_angle(geom.lagrangian_angle(P) - geom.symmetric_angle(A))
    assert abs(d) < 1e-10


@given(angles)
def test_hyperkahler_rotation_makes_phase_planes_complex(theta):
    S = geom.hyperkahler_rotate(theta)
    P = geom.rotated_real_plane(theta)
    # the plane is J-invariant for the rotated structure
    Q = P.projector()
    assert np.abs(Q @ S.J @ P.frame - S.J @ P.frame).max() < 1e-12
    assert np.allclose(S.J @ S.J, -np.eye(4))
    # normalisation of the rotated forms: omega^2/2 = Omega ^ conj(Omega) / 4
    lhs = 0.5 * geom.wedge22(S.omega, S.omega)
    rhs = 0.25 * geom.wedge22(S.Omega, np.conj(S.Omega))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_standard_normalisation():
    S = geom.STANDARD
    lhs = 0.5 * geom.wedge22(S.omega, S.omega)
    assert lhs == pytest.approx(0.25 * geom.wedge22(S.Omega, np.conj(S.Omega)), abs=1e-12)
    assert abs(lhs) == pytest.approx(1.0)


def test_canonical_pair_is_special_and_orthogonal():
    V = geom.canonical_pair()
    assert V.special and V.theta_V == pytest.approx(0.0, abs=1e-15)
    assert V.gamma_min == pytest.approx(math.pi / 2)
    assert V.in_family()


def test_non_special_pair_raises():
    V = geom.PlanePair(geom.real_plane(), geom.rotated_real_plane(0.3))
    with pytest.raises(NotSpecial):
        V.theta_V


@settings(max_examples=25, deadline=None)
@given(angles, small, small, small, small)
def test_special_pair_chart(dth, a, b, c, d):
    V = geom.special_pair([dth, a, b, c, d])
    assert V.special
    assert V.p1.omega_defect() < 1e-12 and V.p2.omega_defect() < 1e-12


@settings(max_examples=10, deadline=None)
@given(small, small, small, small)
def test_pair_distance_is_a_metric(a, b, c, d):
    V0 = geom.canonical_pair()
    V = geom.special_pair([0.0, a, b, c, d])
    assert geom.pair_distance(V0, V0) < 1e-12
    assert geom.pair_distance(V0, V) == pytest.approx(geom.pair_distance(V, V0), abs=1e-9)


def test_pair_json_roundtrip():
    V = geom.special_pair([0.3, 0.05, -0.02, 0.01, 0.04])
    W = geom.PlanePair.from_json(V.to_json())
    assert np.array_equal(V.p1.frame, W.p1.frame) and np.array_equal(V.p2.frame, W.p2.frame)


def test_neck_coordinates_distances():
    V = geom.canonical_pair()
    nc = geom.neck_coordinates(V)
    assert nc.is_unitary
    x = np.random.default_rng(1).standard_normal((50, 4))
    z, w = nc.zw(x)
    assert np.allclose(np.abs(z), V.p2.dist(x))
    assert np.allclose(np.abs(w), V.p1.dist(x))


def test_neck_phase_makes_real_eps_exact():
    V = geom.random_special_pair(np.random.default_rng(3))
    nc = geom.neck_coordinates(V)
    c = geom.loop_coefficient(nc)
    assert c.real == pytest.approx(0.0, abs=1e-12)
    S = geom.lawlor_neck(V, 0.2, R=3.0, kind="samples")
    assert S.omega_defect().max() < 1e-12


def test_lawlor_points_lie_on_neck():
    V = geom.canonical_pair()
    nc = geom.neck_coordinates(V)
    s, phi = geom.lawlor_grid(0.2, 3.0, 32)
    S, P = np.meshgrid(s, phi, indexing="ij")
    x = geom.lawlor_point(nc, 0.2, S, P)
    z, w = nc.zw(x.reshape(-1, 4))
    assert np.abs(z * w - 0.2).max() < 1e-12
    with pytest.raises(ZeroEps):
        geom.lawlor_grid(0.0, 3.0)


def test_grad_z_dot_grad_w_vanishes_on_pair():
    V = geom.canonical_pair()
    nc = geom.neck_coordinates(V)
    assert abs(geom.grad_z_dot_grad_w(V.p1, nc)) < 1e-14
    assert abs(geom.grad_z_dot_grad_w(V.p2, nc)) < 1e-14
