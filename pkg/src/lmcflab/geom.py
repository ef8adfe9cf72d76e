"""Flat Calabi-Yau geometry of C^2 = R^4.

Coordinates on R^4 are ordered ``(x1, y1, x2, y2)`` with ``z_j = x_j + i y_j``.
The standard structure has

* complex structure ``J`` with ``J d/dx = d/dy`` and ``J d/dy = -d/dx``,
* Kahler form ``omega(u, v) = <J u, v> = dx1^dy1 + dx2^dy2``,
* holomorphic volume form ``Omega = dz1^dz2``,
* Liouville form ``lambda(v) = <J x, v> = sum x dy - y dx`` with ``d lambda = 2 omega``.

Two-forms are stored as 4x4 antisymmetric matrices ``M`` with
``form(u, v) = u @ M @ v``.  Planes are stored as 4x2 orthonormal frames.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import Degenerate, NotLagrangian, NotSpecial, ZeroEps

SCHEMA_VERSION = 1

# default thresholds for the family of admissible pairs
C1_DEFAULT = 0.2
C2_DEFAULT = 0.5

LAGRANGIAN_TOL = 1e-8
SPECIAL_TOL = 1e-9


def _standard_J() -> np.ndarray:
    J = np.zeros((4, 4))
    for k in (0, 2):
        J[k + 1, k] = 1.0
        J[k, k + 1] = -1.0
    return J


J_STD = _standard_J()
DZ1 = np.array([1.0, 1.0j, 0.0, 0.0])
DZ2 = np.array([0.0, 0.0, 1.0, 1.0j])
OMEGA_STD = np.outer(DZ1, DZ2) - np.outer(DZ2, DZ1)
KAHLER_STD = -J_STD


def wedge22(a: np.ndarray, b: np.ndarray) -> complex:
    """Coefficient of ``a ^ b`` on ``e1^e2^e3^e4`` for two 2-forms."""
    return (a[0, 1] * b[2, 3] - a[0, 2] * b[1, 3] + a[0, 3] * b[1, 2]
            + a[1, 2] * b[0, 3] - a[1, 3] * b[0, 2] + a[2, 3] * b[0, 1])


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = np.mod(a + np.pi, 2 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------- structures

@dataclass(frozen=True)
class CalibratedStructure:
    """Flat Calabi-Yau structure on R^4.

    ``rotation_phase=None`` is the standard structure.  A phase ``theta``
    selects the hyperkahler rotation whose Kahler form is
    ``Re(exp(-i theta) Omega)``; for it every special Lagrangian plane of
    phase ``theta`` is a complex line.
    """

    rotation_phase: Optional[float] = None

    @property
    def is_standard(self) -> bool:
        return self.rotation_phase is None

    @cached_property
    def omega(self) -> np.ndarray:
        if self.is_standard:
            return KAHLER_STD.copy()
        return np.real(np.exp(-1j * self.rotation_phase) * OMEGA_STD)

    @cached_property
    def J(self) -> np.ndarray:
        # omega(u, v) = <J u, v>  =>  J = omega^T = -omega
        return -self.omega

    @cached_property
    def Omega(self) -> np.ndarray:
        if self.is_standard:
            return OMEGA_STD.copy()
        rot = np.exp(-1j * self.rotation_phase) * OMEGA_STD
        return KAHLER_STD - 1j * np.imag(rot)

    @property
    def metric(self) -> np.ndarray:
        return np.eye(4)

    def kahler(self, u, v):
        return np.einsum("...i,ij,...j->...", u, self.omega, v)

    def holo(self, u, v):
        return np.einsum("...i,ij,...j->...", u, self.Omega, v)

    def to_dict(self) -> dict:
        return {"schema": f"lmcflab.structure/{SCHEMA_VERSION}",
                "rotation_phase": self.rotation_phase}

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedStructure":
        return cls(d.get("rotation_phase"))


STANDARD = CalibratedStructure()


def hyperkahler_rotate(theta: float) -> CalibratedStructure:
    """Structure in which phase-``theta`` special Lagrangian planes are complex lines."""
    return CalibratedStructure(float(theta))


def liouville(x, v):
    """Standard Liouville form ``lambda_x(v) = <J x, v>``."""
    return np.einsum("...i,ij,...j->...", x, J_STD.T, v)


def segment_liouville(a, b):
    """Exact integral of the Liouville form along the segment from a to b.

    Along a straight segment ``int lambda = omega(a, b)``.
    """
    return np.einsum("...i,ij,...j->...", a, KAHLER_STD, b)


# ---------------------------------------------------------------- planes

def _orthonormalize(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    e1 = F[:, 0] / np.linalg.norm(F[:, 0])
    v = F[:, 1] - (F[:, 1] @ e1) * e1
    n = np.linalg.norm(v)
    if n < 1e-14:
        raise Degenerate("frame vectors are parallel")
    return np.column_stack([e1, v / n])


@dataclass(frozen=True, eq=False)
class LagrangianPlane:
    """Oriented 2-plane through the origin given by an orthonormal frame (4x2)."""

    frame: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.frame, dtype=float).reshape(4, 2)
        object.__setattr__(self, "frame", F)
        if np.abs(F.T @ F - np.eye(2)).max() > 1e-10:
            raise Degenerate("frame is not orthonormal")

    @classmethod
    def from_vectors(cls, u, v) -> "LagrangianPlane":
        return cls(_orthonormalize(np.column_stack([u, v])))

    @property
    def e1(self):
        return self.frame[:, 0]

    @property
    def e2(self):
        return self.frame[:, 1]

    def projector(self) -> np.ndarray:
        return self.frame @ self.frame.T

    def dist(self, x):
        """Euclidean distance of points ``x`` (..., 4) to the plane."""
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - x @ self.projector(), axis=-1)

    def coords(self, x):
        return np.asarray(x) @ self.frame

    def reversed(self) -> "LagrangianPlane":
        return LagrangianPlane(self.frame[:, ::-1].copy())

    def omega_defect(self, S: CalibratedStructure = STANDARD) -> float:
        return float(abs(S.kahler(self.e1, self.e2)))

    def to_dict(self) -> dict:
        return {"frame": self.frame.T.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LagrangianPlane":
        return cls(np.asarray(d["frame"], dtype=float).T)

    def __eq__(self, other):
        return isinstance(other, LagrangianPlane) and np.array_equal(self.frame, other.frame)

    def __hash__(self):
        return hash(self.frame.tobytes())


def lagrangian_angle(plane: LagrangianPlane, S: CalibratedStructure = STANDARD,
                     tol: float = LAGRANGIAN_TOL) -> float:
    """Lagrangian angle ``theta`` with ``Omega(e1, e2) = exp(i theta)``."""
    if plane.omega_defect(S) > tol:
        raise NotLagrangian(f"omega(e1,e2) = {plane.omega_defect(S):.3e}")
    return float(wrap_angle(np.angle(S.holo(plane.e1, plane.e2))))


def frame_angle(frames: np.ndarray, S: CalibratedStructure = STANDARD) -> np.ndarray:
    """Vectorized Lagrangian angle of frames shaped (..., 4, 2), no checks."""
    return np.angle(S.holo(frames[..., 0], frames[..., 1]))


def real_plane() -> LagrangianPlane:
    return LagrangianPlane(np.array([[1.0, 0], [0, 0], [0, 1.0], [0, 0]]))


def rotation_z1(phi: float) -> np.ndarray:
    """Unitary map z1 -> exp(i phi) z1; shifts Lagrangian angles by phi."""
    U = np.eye(4)
    c, s = np.cos(phi), np.sin(phi)
    U[:2, :2] = [[c, -s], [s, c]]
    return U


def rotated_real_plane(phi: float) -> LagrangianPlane:
    return LagrangianPlane(rotation_z1(phi) @ real_plane().frame)


def plane_from_symmetric(base: LagrangianPlane, A) -> LagrangianPlane:
    """Lagrangian plane spanned by ``E + J E A`` for a symmetric 2x2 ``A``.

    Its angle is ``theta_base + atan2(tr A, 1 - det A)``.
    """
    A = np.asarray(A, dtype=float)
    A = 0.5 * (A + A.T)
    E = base.frame
    return LagrangianPlane(_orthonormalize(E + J_STD @ E @ A))


def symmetric_angle(A) -> float:
    A = np.asarray(A, dtype=float)
    return float(np.arctan2(np.trace(A), 1.0 - np.linalg.det(A)))


def random_lagrangian_plane(rng: np.random.Generator) -> LagrangianPlane:
    """Uniformly random oriented Lagrangian plane (U(2) orbit of the real plane)."""
    Z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))
    return LagrangianPlane(unitary_to_real(Q) @ real_plane().frame)


def unitary_to_real(U: np.ndarray) -> np.ndarray:
    """Real 4x4 matrix of a complex 2x2 matrix in (x1, y1, x2, y2) coordinates."""
    M = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            a, b = U[i, j].real, U[i, j].imag
            M[2 * i:2 * i + 2, 2 * j:2 * j + 2] = [[a, -b], [b, a]]
    return M


# ---------------------------------------------------------------- pairs

@dataclass(frozen=True, eq=False)
class PlanePair:
    """Ordered pair of oriented Lagrangian planes through 0."""

    p1: LagrangianPlane
    p2: LagrangianPlane

    @cached_property
    def theta1(self) -> float:
        return lagrangian_angle(self.p1)

    @cached_property
    def theta2(self) -> float:
        return lagrangian_angle(self.p2)

    @cached_property
    def principal_angles(self) -> np.ndarray:
        s = np.linalg.svd(self.p1.frame.T @ self.p2.frame, compute_uv=False)
        return np.sort(np.arccos(np.clip(s, -1.0, 1.0)))

    @property
    def gamma_min(self) -> float:
        return float(self.principal_angles[0])

    @property
    def angle_gap(self) -> float:
        return float(abs(wrap_angle(self.theta1 - self.theta2)))

    @property
    def special(self) -> bool:
        return self.angle_gap <= SPECIAL_TOL

    @property
    def theta_V(self) -> float:
        if not self.special:
            raise NotSpecial(f"angles differ by {self.angle_gap:.3e}")
        return self.theta1

    def dist(self, x):
        """``d_V``: distance to the union of the planes."""
        return np.minimum(self.p1.dist(x), self.p2.dist(x))

    def in_family(self, c1=C1_DEFAULT, c2=C2_DEFAULT, ref: Optional["PlanePair"] = None,
                  strict: bool = False) -> bool:
        """Membership in the admissible family (``strict`` uses c1/2)."""
        ref = canonical_pair() if ref is None else ref
        c = c1 / 2 if strict else c1
        return (self.special and self.gamma_min >= c2
                and pair_distance(self, ref) < c)

    def transform(self, U: np.ndarray) -> "PlanePair":
        return PlanePair(LagrangianPlane(U @ self.p1.frame), LagrangianPlane(U @ self.p2.frame))

    def swapped(self) -> "PlanePair":
        return PlanePair(self.p2, self.p1)

    def to_dict(self) -> dict:
        return {"schema": f"lmcflab.pair/{SCHEMA_VERSION}",
                "p1": self.p1.to_dict(), "p2": self.p2.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "PlanePair":
        return cls(LagrangianPlane.from_dict(d["p1"]), LagrangianPlane.from_dict(d["p2"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "PlanePair":
        return cls.from_dict(json.loads(s))


def canonical_pair() -> PlanePair:
    """``V0 = R^2 u iR^2``, both planes of angle 0 and orthogonal.

    ``iR^2`` carries the frame ``(d/dy2, d/dy1)`` so that its angle is 0.
    """
    p1 = real_plane()
    p2 = LagrangianPlane(np.array([[0, 0], [0, 1.0], [0, 0], [1.0, 0]]))
    return PlanePair(p1, p2)


def _unit_normal_towards(P: LagrangianPlane, v: np.ndarray, Jh: np.ndarray) -> np.ndarray:
    """Unit vector in the orthogonal complement of P, preferring direction v."""
    Q = np.eye(4) - P.projector()
    for cand in (v, np.eye(4)[0], np.eye(4)[1], np.eye(4)[2], np.eye(4)[3]):
        n = Q @ cand
        if np.linalg.norm(n) > 1e-6:
            return n / np.linalg.norm(n)
    raise Degenerate("cannot find normal direction")


def _complex_line(u: np.ndarray, Jh: np.ndarray) -> LagrangianPlane:
    u = u / np.linalg.norm(u)
    return LagrangianPlane(np.column_stack([u, Jh @ u]))


def special_pair(params, ref: Optional[PlanePair] = None) -> PlanePair:
    """Five-parameter chart of special pairs near a special reference pair.

    ``params = (dtheta, Re a, Im a, Re b, Im b)``.  The pair is first rotated
    by ``z1 -> exp(i dtheta) z1`` (shifting both angles by ``dtheta``), then each
    plane is moved along the complex-linear graph ``v -> v + a v`` into its
    orthogonal complement, using the rotated complex structure.
    """
    ref = canonical_pair() if ref is None else ref
    dth, ar, ai, br, bi = np.asarray(params, dtype=float)
    base = ref.transform(rotation_z1(dth))
    Jh = hyperkahler_rotate(base.theta_V).J
    planes = []
    for P, Q, (cr, ci) in ((base.p1, base.p2, (ar, ai)), (base.p2, base.p1, (br, bi))):
        u = P.e1
        n = _unit_normal_towards(P, Q.e1, Jh)
        planes.append(_complex_line(u + cr * n + ci * (Jh @ n), Jh))
    return PlanePair(*planes)


def random_special_pair(rng: np.random.Generator, c1: float = C1_DEFAULT,
                        c2: float = C2_DEFAULT, ref: Optional[PlanePair] = None,
                        max_tries: int = 1000) -> PlanePair:
    """Random member of the admissible family around ``ref``."""
    ref = canonical_pair() if ref is None else ref
    for _ in range(max_tries):
        p = rng.uniform(-1, 1, 5) * np.array([np.pi, c1, c1, c1, c1])
        V = special_pair(p, ref)
        if V.gamma_min >= c2 and pair_distance(V, ref) < c1:
            return V
    raise Degenerate("could not sample an admissible pair")


# ---------------------------------------------------------------- neck coordinates

@dataclass(frozen=True, eq=False)
class NeckCoordinates:
    """Complex-linear coordinates ``(z, w)`` for the rotated structure of a pair.

    ``z`` vanishes on ``P2`` and ``w`` on ``P1``; ``|z| = dist(x, P2)`` and
    ``|w| = dist(x, P1)``.  The map is unitary exactly when the planes are
    orthogonal.  The phase of ``w`` is fixed so that necks ``{zw = eps}`` with
    real ``eps`` are exact.
    """

    V: PlanePair
    cz: np.ndarray  # complex covector, z = cz @ x
    cw: np.ndarray

    @cached_property
    def real_matrix(self) -> np.ndarray:
        return np.vstack([self.cz.real, self.cz.imag, self.cw.real, self.cw.imag])

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.real_matrix)

    def zw(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.cz, x @ self.cw

    def point(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        Y = np.stack([z.real, z.imag, w.real, w.imag], axis=-1)
        return Y @ self.inverse.T

    def dpoint(self, dz, dw):
        """Tangent vector for coordinate increments (linear map)."""
        return self.point(dz, dw)

    @property
    def theta_V(self) -> float:
        return self.V.theta_V

    @property
    def is_unitary(self) -> bool:
        return bool(np.abs(self.real_matrix @ self.real_matrix.T - np.eye(4)).max() < 1e-10)


def _loop_coefficient(cz, cw) -> complex:
    """``c`` with loop integral of lambda around ``{zw = eps}`` equal to Re(conj(c) eps)."""
    M = np.linalg.inv(np.vstack([cz.real, cz.imag, cw.real, cw.imag]))

    def pt(z, w):
        return M @ np.array([z.real, z.imag, w.real, w.imag])

    def loop(eps):
        # x(phi) = A cos(phi) + B sin(phi); the integral is 2 pi omega(A, B)
        A = pt(1.0 + 0j, eps + 0j)
        B = pt(1j, -1j * eps)
        return 2 * np.pi * (A @ KAHLER_STD @ B)

    return complex(loop(1.0), loop(1j))


def neck_coordinates(V: PlanePair) -> NeckCoordinates:
    """Neck coordinates adapted to a special transverse pair."""
    if not V.special:
        raise NotSpecial(f"angles differ by {V.angle_gap:.3e}")
    if V.gamma_min < 1e-8:
        raise Degenerate(f"pair not transverse (gamma_min={V.gamma_min:.2e})")
    Jh = hyperkahler_rotate(V.theta_V).J
    a = _unit_normal_towards(V.p2, V.p1.e1, Jh)
    b = _unit_normal_towards(V.p1, V.p2.e1, Jh)
    cz = a + 1j * (Jh @ a)
    cw = b + 1j * (Jh @ b)
    c = _loop_coefficient(cz, cw)
    cw = cw * np.exp(1j * (np.pi / 2 - np.angle(c)))
    return NeckCoordinates(V, cz, cw)


def loop_coefficient(nc: NeckCoordinates) -> complex:
    return _loop_coefficient(nc.cz, nc.cw)


def grad_z_dot_grad_w(plane: LagrangianPlane, nc: NeckCoordinates,
                      tol: float = LAGRANGIAN_TOL) -> complex:
    """``sum_k dz(e_k) dw(e_k)`` over an orthonormal frame of a Lagrangian plane."""
    if plane.omega_defect() > tol:
        raise NotLagrangian(f"omega(e1,e2) = {plane.omega_defect():.3e}")
    F = plane.frame
    return complex(np.sum((nc.cz @ F) * (nc.cw @ F)))


# ---------------------------------------------------------------- distances

def _circle(P: LagrangianPlane, t):
    return np.cos(t)[:, None] * P.e1 + np.sin(t)[:, None] * P.e2


def _one_sided(V: PlanePair, W: PlanePair, n: int) -> float:
    best = 0.0
    t = np.linspace(0, np.pi, n, endpoint=False)  # antipodal symmetry
    for P in (V.p1, V.p2):
        d = W.dist(_circle(P, t))
        k = int(np.argmax(d))
        dt = np.pi / n

        def neg(s, P=P):
            return -float(W.dist(_circle(P, np.array([s])))[0])

        res = minimize_scalar(neg, bounds=(t[k] - dt, t[k] + dt), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, d[k], -res.fun)
    return float(best)


def pair_distance(V: PlanePair, W: PlanePair, n: int = 1024) -> float:
    """Hausdorff distance between ``V n B_1`` and ``W n B_1``.

    For cones this is attained on unit circles; each circle is sampled at
    ``n`` angles and the maximum is polished by a bounded scalar search.
    """
    return max(_one_sided(V, W, n), _one_sided(W, V, n))


# ---------------------------------------------------------------- Lawlor necks

def lawlor_grid(eps: complex, R: float, n_phi: int = 64):
    """Conformal log-polar grid ``z = sqrt|eps| exp(s + i phi)`` out to radius ~R."""
    eps = complex(eps)
    if eps == 0:
        raise ZeroEps("eps must be nonzero")
    a = abs(eps)
    S = 0.5 * np.arccosh(max(R * R / (2 * a), 1.0))
    dphi = 2 * np.pi / n_phi
    n_s = max(3, int(round(2 * S / dphi)) + 1)
    s = np.linspace(-S, S, n_s)
    phi = np.arange(n_phi) * dphi
    return s, phi


def lawlor_point(nc: NeckCoordinates, eps: complex, s, phi):
    """Point of ``{zw = eps}`` at log-polar parameters (s, phi)."""
    eps = complex(eps)
    z = np.sqrt(abs(eps)) * np.exp(s + 1j * phi)
    return nc.point(z, eps / z)


def lawlor_neck(V: PlanePair, eps: complex, R: float = 3.0, n_phi: int = 64,
                kind: str = "mesh"):
    """Lawlor neck ``{zw = eps}`` as a mesh state or an analytic sample set.

    ``kind="mesh"`` returns a :class:`~lmcflab.surface.Mesh4D` on the
    conformal log-polar grid; ``kind="samples"`` returns exact samples
    with analytic frames.
    """
    from . import surface

    if kind == "mesh":
        return surface.lawlor_mesh(V, eps, R, n_phi)
    if kind == "samples":
        return surface.lawlor_samples(V, eps, R, n_phi=n_phi)
    raise ValueError(f"unknown kind {kind!r}")
