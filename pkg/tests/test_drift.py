import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmcflab import drift
from lmcflab.errors import BadGapParams, InsufficientAngularCoverage, OutOfRange


@pytest.fixture(scope="module")
def basis():
    return drift.hermite_basis(8)


def test_basis_is_orthonormal(basis):
    x, w = drift.gauss_nodes(20)
    B = basis.evaluate(x)
    G = np.einsum("inc,jnc,n->ij", B, B, w)
    assert np.abs(G - np.eye(len(basis))).max() < 1e-10


def test_basis_functions_are_eigenfunctions(basis):
    x = np.random.default_rng(0).uniform(-2, 2, (30, 2))
    for i in range(0, len(basis), 7):
        def u(p, i=i):
            return basis.evaluate(p)[i]
        Lu = drift.drift_operator(u, x)
        assert np.abs(Lu - basis.mu[i] * u(x)).max() < 1e-5


def test_log_mode_is_eigenfunction():
    x = np.random.default_rng(1).uniform(0.5, 2, (30, 2))
    f = drift.SpectralField(1.0, np.zeros(len(drift.hermite_basis(2))), drift.hermite_basis(2))
    Lu = drift.drift_operator(f.evaluate, x)
    assert np.abs(Lu - drift.LOG_RATE * f.evaluate(x)).max() < 1e-5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.0, 3.0))
def test_evolve_norm_matches_closed_form(seed, s):
    rng = np.random.default_rng(seed)
    b = drift.hermite_basis(6)
    f = drift.SpectralField(rng.standard_normal(), rng.standard_normal(len(b)), b)
    assert drift.evolve(f, s).norm() == pytest.approx(float(f.norm_at(s)), rel=1e-12)


def test_project_roundtrip(basis):
    rng = np.random.default_rng(2)
    f = drift.SpectralField(0.0, rng.standard_normal(len(basis)), basis)
    g = drift.project(f.evaluate, basis.k_max)
    assert np.abs(g.coeffs - f.coeffs).max() < 1e-10


def test_field_json_roundtrip(basis):
    f = drift.SpectralField(0.5, np.arange(len(basis), dtype=float), basis)
    g = drift.SpectralField.from_dict(f.to_dict())
    assert g.a0 == f.a0 and np.array_equal(g.coeffs, f.coeffs)
    with pytest.raises(OutOfRange):
        drift.SpectralField.from_dict({**f.to_dict(), "basis": "other"})


def test_gap_admissibility():
    a = drift.gap_admissible(0.039, 0.041)
    assert a is not None and 0.039 < a < 0.041
    assert drift.gap_admissible(0.3, 0.302) is None
    with pytest.raises(BadGapParams):
        drift.three_annulus_check(drift.SpectralField.zero(4), 0.3, 0.302)


def test_three_annulus_small_batch(basis):
    rng = np.random.default_rng(7)
    A0, C = drift.random_coefficients(rng, 2000, basis)
    counts = drift.three_annulus_batch(A0, C, basis.mu, 0.039, 0.041, basis.static_mask())
    assert counts[1] == 0 and counts[3] == 0
    bad = drift.three_annulus_batch(A0, C, basis.mu, 0.3, 0.302, basis.static_mask())
    assert bad[1] + bad[3] > 0


def test_split_static_divergences():
    b = drift.hermite_basis(4)
    rng = np.random.default_rng(3)
    u = (drift.SpectralField(0.0, rng.standard_normal(len(b)), b),
         drift.SpectralField(0.0, rng.standard_normal(len(b)), b))
    u00, u01, up = drift.split_static(u)
    a1 = drift.divergence_static(drift.SpectralField(0.0, np.where(b.static_mask(), u[0].coeffs, 0), b))
    a2 = drift.divergence_static(drift.SpectralField(0.0, np.where(b.static_mask(), u[1].coeffs, 0), b))
    assert drift.divergence_static(u01[0]) == pytest.approx((a1 - a2) / 2)
    assert drift.divergence_static(u01[1]) == pytest.approx(-(a1 - a2) / 2)
    assert drift.divergence_static(u00[0]) == pytest.approx((a1 + a2) / 2)
    assert drift.divergence_static(u00[1]) == pytest.approx((a1 + a2) / 2)
    for j in range(2):
        total = u00[j].coeffs + u01[j].coeffs + up[j].coeffs
        assert np.allclose(total, u[j].coeffs)


def test_fit_log_mode_recovers_coefficient():
    rng = np.random.default_rng(4)
    r = rng.uniform(1, 2, 400)
    a = rng.uniform(0, 2 * np.pi, 400)
    x = np.stack([r * np.cos(a), r * np.sin(a)], 1)
    u = 0.7 * x / r[:, None] ** 2 + np.stack([0.3 + 0.1 * x[:, 1], -0.2 + 0.1 * x[:, 0]], 1)
    fit = drift.fit_log_mode(x, u)
    assert fit.a0 == pytest.approx(0.7, abs=1e-8)
    with pytest.raises(InsufficientAngularCoverage):
        drift.fit_log_mode(x[x[:, 0] > 0], u[x[:, 0] > 0])


def test_evolve_fd_matches_exact_small():
    b = drift.hermite_basis(2)
    f = drift.SpectralField(0.0, np.eye(len(b))[2] + 0.5 * np.eye(len(b))[7], b)
    g = drift.Grid2D(8.0, 81)
    U = drift.evolve_fd(drift.sample_on_grid(f, g), g, 0.2)
    E = drift.sample_on_grid(drift.evolve(f, 0.2), g)
    assert drift.weighted_l2(U - E, g) < 1e-3
    with pytest.raises(OutOfRange):
        drift.evolve_fd(U, drift.Grid2D(5.0, 41), 0.1)
