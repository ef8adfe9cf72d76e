"""Drift heat equation on Gaussian-weighted R^2.

``d_s u = Delta u + (u - x . grad u) / 2`` acting componentwise on 1-forms
``u = u_1 dx_1 + u_2 dx_2``.  Eigen-1-forms are weighted Hermite products
``h_a(x_1) h_b(x_2) dx_c`` with rate ``1/2 - (a + b)/2``; the singular mode
``d ln|x|`` has rate 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import hermite_e as He
from scipy import sparse
from scipy.sparse import linalg as sla

from .errors import BadGapParams, CFLViolation, InsufficientAngularCoverage, OutOfRange

BASIS_VERSION = "hermite-1form/1"
LOG_RATE = 1.0
GAP_A, LAMBDA1, LAMBDA2 = 0.04, 0.039, 0.041


# ---------------------------------------------------------------- basis

def hermite_1d(n: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal ``h_n`` for the weight ``exp(-x^2/4)`` on R."""
    c = np.zeros(n + 1)
    c[n] = 1.0
    return He.hermeval(np.asarray(x) / math.sqrt(2), c) / math.sqrt(math.factorial(n) * 2 * math.sqrt(math.pi))


@dataclass(frozen=True)
class HermiteBasis:
    """Orthonormal weighted-Hermite 1-forms up to total degree ``k_max``.

    ``index[i] = (c, a, b)`` means ``h_a(x_1) h_b(x_2) dx_c``; ``mu[i]`` is its rate.
    """

    k_max: int

    def __post_init__(self):
        if not (0 <= self.k_max <= 20):
            raise OutOfRange("k_max must lie in [0, 20]")

    @property
    def index(self) -> Tuple[Tuple[int, int, int], ...]:
        return _index(self.k_max)

    @property
    def degree(self) -> np.ndarray:
        return np.array([a + b for _, a, b in self.index])

    @property
    def mu(self) -> np.ndarray:
        return 0.5 - 0.5 * self.degree

    def __len__(self):
        return len(self.index)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Basis values at points ``x`` (n, 2): array (n_basis, n, 2)."""
        x = np.atleast_2d(x)
        H1 = np.stack([hermite_1d(k, x[:, 0]) for k in range(self.k_max + 1)])
        H2 = np.stack([hermite_1d(k, x[:, 1]) for k in range(self.k_max + 1)])
        out = np.zeros((len(self), len(x), 2))
        for i, (c, a, b) in enumerate(self.index):
            out[i, :, c] = H1[a] * H2[b]
        return out

    def static_mask(self) -> np.ndarray:
        return self.degree == 1


@lru_cache(maxsize=None)
def _index(k_max):
    return tuple((c, a, k - a) for k in range(k_max + 1) for a in range(k, -1, -1) for c in (0, 1))


def hermite_basis(k_max: int = 12) -> HermiteBasis:
    return HermiteBasis(k_max)


def gauss_nodes(n: int):
    """Tensor Gauss nodes and weights for ``int f exp(-|x|^2/4) dx`` on R^2."""
    y, w = He.hermegauss(n)
    x = y * math.sqrt(2)
    w = w * math.sqrt(2)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return np.stack([X1.ravel(), X2.ravel()], 1), W.ravel()


def drift_operator(u_fn, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """``(Delta + 1/2 - x . grad / 2) u`` by fourth-order central differences."""
    x = np.atleast_2d(x)
    e = np.eye(2) * h
    c0 = u_fn(x)
    lap = np.zeros_like(c0)
    adv = np.zeros_like(c0)
    for k in range(2):
        up, um = u_fn(x + e[k]), u_fn(x - e[k])
        upp, umm = u_fn(x + 2 * e[k]), u_fn(x - 2 * e[k])
        lap += (-upp + 16 * up - 30 * c0 + 16 * um - umm) / (12 * h * h)
        adv += x[:, k:k + 1] * (-upp + 8 * up - 8 * um + umm) / (12 * h)
    return lap + 0.5 * c0 - 0.5 * adv


# ---------------------------------------------------------------- spectral fields

@dataclass
class SpectralField:
    """``u = a0 d ln|x| + sum_i a_i phi_i`` with its basis and elapsed drift time."""

    a0: float
    coeffs: np.ndarray
    basis: HermiteBasis = field(default_factory=lambda: HermiteBasis(12))

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (len(self.basis),):
            raise OutOfRange("coefficient count does not match the basis")

    @classmethod
    def zero(cls, k_max: int = 12) -> "SpectralField":
        b = HermiteBasis(k_max)
        return cls(0.0, np.zeros(len(b)), b)

    @property
    def mu(self) -> np.ndarray:
        return self.basis.mu

    def norm(self) -> float:
        return math.sqrt(self.a0 ** 2 + float(np.sum(self.coeffs ** 2)))

    def norm_at(self, s) -> np.ndarray:
        """``||u(s)||`` in closed form (log-mode coefficient with weight e^{2s})."""
        s = np.asarray(s, dtype=float)
        return np.sqrt(self.a0 ** 2 * np.exp(2 * s)
                       + np.sum(self.coeffs ** 2 * np.exp(2 * np.multiply.outer(s, self.mu)), axis=-1))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.tensordot(self.coeffs, self.basis.evaluate(x), axes=1)
        if self.a0:
            out = out + self.a0 * x / np.sum(x * x, axis=1, keepdims=True)
        return out

    def smooth_part(self) -> "SpectralField":
        return SpectralField(0.0, self.coeffs.copy(), self.basis)

    def to_dict(self) -> dict:
        return {"basis": BASIS_VERSION, "k_max": self.basis.k_max, "a0": self.a0,
                "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralField":
        if d.get("basis") != BASIS_VERSION:
            raise OutOfRange(f"unknown basis {d.get('basis')}")
        return cls(d["a0"], np.array(d["coeffs"]), HermiteBasis(d["k_max"]))


def project(u_fn, k_max: int = 12, n_quad: Optional[int] = None, a0: float = 0.0) -> SpectralField:
    """Project a smooth 1-form (callable on (n,2) points) onto the basis by Gauss quadrature."""
    b = HermiteBasis(k_max)
    x, w = gauss_nodes(n_quad or (k_max + 8))
    vals = u_fn(x)
    B = b.evaluate(x)
    return SpectralField(a0, np.einsum("inc,nc,n->i", B, vals, w), b)


def evolve(f: SpectralField, s: float) -> SpectralField:
    """Exact drift-heat evolution for time ``s``."""
    return SpectralField(f.a0 * math.exp(LOG_RATE * s), f.coeffs * np.exp(f.mu * s), f.basis)


# ---------------------------------------------------------------- finite-difference oracles

@dataclass
class Grid2D:
    L: float
    n: int

    @property
    def h(self) -> float:
        return 2 * self.L / (self.n - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n)

    def points(self) -> np.ndarray:
        X1, X2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([X1.ravel(), X2.ravel()], 1)

    def weights(self) -> np.ndarray:
        t = np.full(self.n, self.h)
        t[[0, -1]] *= 0.5
        x = self.points()
        return (np.outer(t, t).ravel() * np.exp(-np.sum(x * x, 1) / 4))


def _d1(u, h, axis):
    # fourth-order centred first derivative, second order at the two outer layers
    g = np.gradient(u, h, axis=axis, edge_order=2)
    sl = [slice(None)] * 2

    def sh(k):
        s = list(sl)
        s[axis] = slice(2 + k, u.shape[axis] - 2 + k)
        return tuple(s)

    inner = list(sl)
    inner[axis] = slice(2, -2)
    g[tuple(inner)] = (-u[sh(2)] + 8 * u[sh(1)] - 8 * u[sh(-1)] + u[sh(-2)]) / (12 * h)
    return g


def _d2(u, h, axis):
    g = np.zeros_like(u)
    n = u.shape[axis]

    def take(a, b):
        s = [slice(None)] * 2
        s[axis] = slice(a, n + b if b <= 0 else b)
        return tuple(s)

    g[take(1, -1)] = (u[take(2, 0)] + u[take(0, -2)] - 2 * u[take(1, -1)]) / h ** 2
    g[take(2, -2)] = (-u[take(4, 0)] + 16 * u[take(3, -1)] - 30 * u[take(2, -2)]
                      + 16 * u[take(1, -3)] - u[take(0, -4)]) / (12 * h * h)
    return g


def _drift_rhs(U: np.ndarray, x1: np.ndarray, x2: np.ndarray, h: float) -> np.ndarray:
    # U: (2, n, n); fourth-order centred differences inside, second order next to
    # the edge, and drift-only (outflow) update on the edge itself
    out = np.empty_like(U)
    for c in range(2):
        u = U[c]
        lap = _d2(u, h, 0) + _d2(u, h, 1)
        lap[[0, -1], :] = 0.0
        lap[:, [0, -1]] = 0.0
        out[c] = lap + 0.5 * u - 0.5 * (x1 * _d1(u, h, 0) + x2 * _d1(u, h, 1))
    return out


def evolve_fd(u0: np.ndarray, grid: Grid2D, s: float, cfl: float = 0.2) -> np.ndarray:
    """RK4 finite-difference evolution of grid data ``u0`` (2, n, n) for time ``s``."""
    if grid.L < 8:
        raise OutOfRange("truncation radius must be at least 8")
    h = grid.h
    if cfl > 0.25:
        raise CFLViolation("explicit scheme needs cfl <= 0.25")
    n_steps = max(1, int(math.ceil(s / (cfl * h * h))))
    dt = s / n_steps
    X1, X2 = np.meshgrid(grid.axis, grid.axis, indexing="ij")
    U = np.array(u0, dtype=float)
    for _ in range(n_steps):
        k1 = _drift_rhs(U, X1, X2, h)
        k2 = _drift_rhs(U + 0.5 * dt * k1, X1, X2, h)
        k3 = _drift_rhs(U + 0.5 * dt * k2, X1, X2, h)
        k4 = _drift_rhs(U + dt * k3, X1, X2, h)
        U = U + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(U)):
        raise CFLViolation("finite-difference evolution blew up")
    return U


def sample_on_grid(f: SpectralField, grid: Grid2D) -> np.ndarray:
    v = f.evaluate(grid.points())
    return np.moveaxis(v.reshape(grid.n, grid.n, 2), -1, 0)


def weighted_l2(U: np.ndarray, grid: Grid2D) -> float:
    w = grid.weights()
    return math.sqrt(float(np.sum(w * np.sum(U.reshape(2, -1) ** 2, axis=0))))


def radial_evolve_fd(phi0, r_in: float, r_out: float, n: int, s: float, cfl: float = 0.2):
    """Evolve a radial 1-form ``u = phi(r) x / r`` on an annulus.

    ``phi_s = phi_rr + phi_r / r - phi / r^2 - r phi_r / 2 + phi / 2``.  The
    inner boundary carries the log-mode shape condition ``(r phi)_r = 0``
    (amplitude free) and the outer boundary is an outflow edge.
    Returns ``(r, phi(s))``.
    """
    r = np.linspace(r_in, r_out, n)
    h = r[1] - r[0]
    phi = np.asarray(phi0(r), dtype=float)

    def rhs(p):
        out = np.empty_like(p)
        pr = np.gradient(p, h, edge_order=2)
        prr = np.zeros_like(p)
        prr[1:-1] = (p[2:] - 2 * p[1:-1] + p[:-2]) / h ** 2
        out[1:-1] = (prr + pr / r - p / r ** 2 - 0.5 * r * pr + 0.5 * p)[1:-1]
        out[-1] = (-0.5 * r * pr + 0.5 * p)[-1]
        out[0] = 0.0
        return out

    def bc(p):
        # (r phi)_r = 0 at r_in, second-order one-sided
        q = r * p
        q0 = (4 * q[1] - q[2]) / 3
        p[0] = q0 / r[0]
        return p

    n_steps = max(1, int(math.ceil(s / (cfl * h * h))))
    dt = s / n_steps
    phi = bc(phi)
    for _ in range(n_steps):
        k1 = rhs(phi)
        k2 = rhs(bc(phi + 0.5 * dt * k1))
        k3 = rhs(bc(phi + 0.5 * dt * k2))
        k4 = rhs(bc(phi + dt * k3))
        phi = bc(phi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    return r, phi


def log_mode_rate(s: float = 1.0, r_in: float = 0.2, r_out: float = 10.0, n: int = 981) -> float:
    """Measured growth rate of ``d ln|x|`` on an annulus (weighted norm, inner region)."""
    r, phi = radial_evolve_fd(lambda r: 1 / r, r_in, r_out, n, s)
    w = np.exp(-r * r / 4) * r
    m = (r >= 2 * r_in) & (r <= 0.6 * r_out)
    n0 = math.sqrt(np.sum(w[m] / r[m] ** 2))
    n1 = math.sqrt(np.sum(w[m] * phi[m] ** 2))
    return math.log(n1 / n0) / s


def fd_spectrum(L: float = 10.0, n: int = 161, k: int = 30, sigma: float = 1.0) -> np.ndarray:
    """Eigenvalues of the drift operator from a symmetric finite-difference model.

    With ``phi = exp(|x|^2/8) v`` the operator becomes
    ``Delta v - (|x|^2/16 - 1/2) v + v/2`` on 1-form components; Dirichlet data on
    ``[-L, L]^2``.  Each eigenvalue appears twice (two components); the scalar
    problem is solved and returned sorted descending.
    """
    x = np.linspace(-L, L, n)[1:-1]
    h = x[1] - x[0]
    m = len(x)
    D = sparse.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / h ** 2
    I = sparse.identity(m)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    pot = (X1 ** 2 + X2 ** 2).ravel() / 16 - 0.5
    A = sparse.kron(D, I) + sparse.kron(I, D) - sparse.diags(pot) + 0.5 * sparse.identity(m * m)
    vals = sla.eigsh(A.tocsc(), k=k, sigma=sigma, which="LM", return_eigenvectors=False)
    return np.sort(vals)[::-1]


def spectrum_table(k_max: int = 6, **kw):
    """Rows ``(k, predicted mu, measured mu, multiplicity)`` plus the log-mode rate."""
    vals = fd_spectrum(**kw)
    rows = []
    used = 0
    for k in range(k_max + 1):
        mult = k + 1
        got = vals[used:used + mult]
        used += mult
        rows.append((k, 0.5 - 0.5 * k, float(np.mean(got)), float(np.max(np.abs(got - (0.5 - 0.5 * k))))))
    return rows, log_mode_rate()


# ---------------------------------------------------------------- three-annulus arithmetic

def gap_admissible(lam1: float, lam2: float, n_grid: int = 2001) -> Optional[float]:
    """A gap parameter ``a`` certifying the pair ``(lam1, lam2)``, or None.

    Requires ``lam1 < a < lam2``, no nonzero rate in ``[-10a, 10a]`` and
    ``exp(2a) (2 cosh(2a) - exp(2a - 2 lam1)) >= exp(2 lam2)``, which is the
    closing inequality of the argument with ``1 + c = cosh(2a)``.
    """
    if not (0 < lam1 < lam2 < 1):
        return None
    for a in np.linspace(lam1, lam2, n_grid)[1:-1]:
        if 10 * a >= 0.5:
            continue
        c = min(math.cosh(2 * a), math.cosh(1 - 2 * a))
        if math.exp(2 * a) * (2 * c - math.exp(2 * a - 2 * lam1)) >= math.exp(2 * lam2):
            return float(a)
    return None


@dataclass
class ThreeAnnulusVerdict:
    n0: float
    n1: float
    n2: float
    part1_applies: bool
    part1_holds: bool
    part2_applies: bool
    part2_holds: bool

    @property
    def violated(self) -> bool:
        return (self.part1_applies and not self.part1_holds) or (self.part2_applies and not self.part2_holds)


def three_annulus_check(f: SpectralField, lam1: float = LAMBDA1, lam2: float = LAMBDA2,
                        check_gap: bool = True, tol: float = 1e-12) -> ThreeAnnulusVerdict:
    """Evaluate both alternatives of the three-annulus estimate on ``f``."""
    if check_gap and gap_admissible(lam1, lam2) is None:
        raise BadGapParams(f"(lambda1, lambda2) = ({lam1}, {lam2}) fails the gap condition")
    n0, n1, n2 = f.norm_at([0.0, 1.0, 2.0])
    p1a = n1 >= math.exp(lam1) * n0 * (1 - tol)
    p1h = n2 >= math.exp(lam2) * n1 * (1 - tol)
    static = f.basis.static_mask()
    p2a = bool(f.norm() > 0 and np.all(f.coeffs[static] == 0))
    p2h = (n2 >= math.exp(lam1) * n1 * (1 - tol)) or (n1 <= math.exp(-lam1) * n0 * (1 + tol))
    return ThreeAnnulusVerdict(float(n0), float(n1), float(n2), bool(p1a), bool(p1h), p2a, bool(p2h))


def three_annulus_batch(A0: np.ndarray, C: np.ndarray, mu: np.ndarray, lam1: float, lam2: float,
                        static: np.ndarray, tol: float = 1e-12):
    """Vectorised verdicts for many coefficient vectors.

    Returns counts ``(n_part1_applies, n_part1_violations, n_part2_applies, n_part2_violations)``.
    """
    def nrm(s):
        return np.sqrt(A0 ** 2 * math.exp(2 * s) + np.sum(C ** 2 * np.exp(2 * mu * s), axis=1))

    n0, n1, n2 = nrm(0.0), nrm(1.0), nrm(2.0)
    p1a = n1 >= math.exp(lam1) * n0 * (1 - tol)
    p1v = p1a & ~(n2 >= math.exp(lam2) * n1 * (1 - tol))
    p2a = np.all(C[:, static] == 0, axis=1) & (n0 > 0)
    p2h = (n2 >= math.exp(lam1) * n1 * (1 - tol)) | (n1 <= math.exp(-lam1) * n0 * (1 + tol))
    p2v = p2a & ~p2h
    return int(p1a.sum()), int(p1v.sum()), int(p2a.sum()), int(p2v.sum())


def random_coefficients(rng: np.random.Generator, n: int, basis: HermiteBasis,
                        p_static_zero: float = 0.5, p_log: float = 0.5):
    """Random coefficient vectors with a spread of magnitudes per mode."""
    m = len(basis)
    spread = rng.uniform(0.2, 4.0, (n, 1))
    C = rng.standard_normal((n, m)) * 10.0 ** (-spread * rng.random((n, m)))
    C *= rng.random((n, m)) < rng.uniform(0.05, 1.0, (n, 1))
    # cap the degree per vector so that slow modes compete on equal terms
    cap = rng.integers(0, basis.k_max + 1, (n, 1))
    C *= basis.degree[None, :] <= cap
    A0 = rng.standard_normal(n) * 10.0 ** (-spread[:, 0] * rng.random(n)) * (rng.random(n) < p_log)
    kill = rng.random(n) < p_static_zero
    static = basis.static_mask()
    C[np.ix_(kill, static)] = 0.0
    empty = (np.abs(C).sum(1) == 0) & (A0 == 0)
    A0[empty] = 1.0
    return A0, C


# ---------------------------------------------------------------- static splitting

def divergence_static(f: SpectralField) -> float:
    """Constant divergence of the degree-one (static) part."""
    idx = f.basis.index
    k10 = idx.index((0, 1, 0))
    k01 = idx.index((1, 0, 1))
    return (f.coeffs[k10] + f.coeffs[k01]) / (2 * math.sqrt(2 * math.pi))


def radial_static(c: float, basis: HermiteBasis) -> np.ndarray:
    """Coefficients of ``d(c |x|^2)`` (divergence ``4 c``)."""
    out = np.zeros(len(basis))
    idx = basis.index
    val = 2 * c * 2 * math.sqrt(2 * math.pi)
    out[idx.index((0, 1, 0))] = val
    out[idx.index((1, 0, 1))] = val
    return out


def split_static(u: Tuple[SpectralField, SpectralField]):
    """Split a 1-form on a pair of planes into ``u00 + u01 + u_perp``.

    ``u0`` is the static (rate 0) part on each plane; with ``a_j`` the
    divergence of ``u0`` on plane ``j`` and ``c = (a_1 - a_2)/8``,
    ``u01 = (d(c|x|^2), d(-c|x|^2))`` has divergences ``+-(a_1 - a_2)/2`` and
    ``u00 = u0 - u01`` has divergence ``(a_1 + a_2)/2`` on both planes.
    """
    f1, f2 = u
    st = f1.basis.static_mask()
    s1 = np.where(st, f1.coeffs, 0.0)
    s2 = np.where(st, f2.coeffs, 0.0)
    a1 = divergence_static(SpectralField(0.0, s1, f1.basis))
    a2 = divergence_static(SpectralField(0.0, s2, f2.basis))
    c = (a1 - a2) / 8
    r1 = radial_static(c, f1.basis)
    r2 = radial_static(-c, f2.basis)
    u01 = (SpectralField(0.0, r1, f1.basis), SpectralField(0.0, r2, f2.basis))
    u00 = (SpectralField(0.0, s1 - r1, f1.basis), SpectralField(0.0, s2 - r2, f2.basis))
    up = (SpectralField(f1.a0, np.where(st, 0.0, f1.coeffs), f1.basis),
          SpectralField(f2.a0, np.where(st, 0.0, f2.coeffs), f2.basis))
    return u00, u01, up


# ---------------------------------------------------------------- log-mode fitting

@dataclass
class LogModeFit:
    a0: float
    circulation: float
    remainder: np.ndarray
    smooth_coeffs: np.ndarray
    rms_residual: float


def fit_log_mode(x: np.ndarray, u: np.ndarray, degree: int = 6, n_sectors: int = 8) -> LogModeFit:
    """Least-squares split ``u = a0 d ln|x| + b0 d phi + smooth`` on annulus samples.

    The smooth part is a polynomial 1-form of total degree <= ``degree``.
    ``remainder = u - a0 d ln|x|``.  Requires samples in every angular sector.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    r2 = np.sum(x * x, 1)
    if np.any(r2 == 0):
        raise InsufficientAngularCoverage("annulus samples must exclude the origin")
    ang = np.floor((np.arctan2(x[:, 1], x[:, 0]) + np.pi) / (2 * np.pi) * n_sectors).astype(int) % n_sectors
    if len(set(ang.tolist())) < n_sectors:
        raise InsufficientAngularCoverage("samples do not cover every angular sector")
    scale = math.sqrt(float(np.max(r2)))
    y = x / scale
    cols = [np.concatenate([x[:, 0] / r2, x[:, 1] / r2]),
            np.concatenate([-x[:, 1] / r2, x[:, 0] / r2])]
    for k in range(degree + 1):
        for a in range(k + 1):
            mono = y[:, 0] ** a * y[:, 1] ** (k - a)
            z = np.zeros_like(mono)
            cols.append(np.concatenate([mono, z]))
            cols.append(np.concatenate([z, mono]))
    A = np.stack(cols, 1)
    rhs = np.concatenate([u[:, 0], u[:, 1]])
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    res = rhs - A @ coef
    a0, b0 = float(coef[0]), float(coef[1])
    rem = u - a0 * x / r2[:, None]
    return LogModeFit(a0, b0, rem, coef[2:], float(np.sqrt(np.mean(res ** 2))))
