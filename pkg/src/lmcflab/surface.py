"""Discrete Lagrangian surfaces in R^4.

Every representation converts to a :class:`SampleSet` through :func:`embed`:
positions, oriented orthonormal tangent frames, Lagrangian angle, mean
curvature vector and area weights.  Diagnostics and quadrature only ever see
samples.

Representations
---------------
PotentialGraph
    ``{p + J grad f(p)}`` over a Lagrangian plane, Cartesian or polar grid.
TwoChartGraph
    two annular polar potential charts, one over each plane of a pair, with an
    optional Lawlor neck parameter (blended partition of unity at the waist).
Mesh4D
    triangle mesh in R^4.
CurveProduct
    product of two plane curves ``gamma1 x gamma2``.
EquivariantProfile
    ``{gamma(s) (cos a, sin a)}`` for a profile curve ``gamma`` in C.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from . import geom
from .errors import BoundaryNode, DegenerateGrid, MeshTangled, ZeroEps
from .geom import J_STD, KAHLER_STD, LagrangianPlane, PlanePair

STATE_SCHEMA = 1


# ---------------------------------------------------------------- samples

class SurfaceSample(NamedTuple):
    x: np.ndarray
    frame: np.ndarray
    theta: float
    H: np.ndarray
    dA: float


@dataclass
class SampleSet:
    """Struct-of-arrays sample container.

    Attributes
    ----------
    x : (n, 4) positions
    frames : (n, 4, 2) oriented orthonormal tangent frames
    theta : (n,) Lagrangian angle (graded lift when ``graded``)
    H : (n, 4) mean curvature vectors
    dA : (n,) area weights
    h : characteristic spacing
    graded : whether ``theta`` is a global single-valued lift
    extent : radius out to which the surface is represented (inf if unknown)
    """

    x: np.ndarray
    frames: np.ndarray
    theta: np.ndarray
    H: np.ndarray
    dA: np.ndarray
    h: float = np.nan
    graded: bool = True
    extent: float = np.inf
    chart: Optional[np.ndarray] = None  # chart / sheet label per sample

    def __len__(self):
        return len(self.dA)

    def __getitem__(self, i) -> SurfaceSample:
        return SurfaceSample(self.x[i], self.frames[i], float(self.theta[i]), self.H[i],
                             float(self.dA[i]))

    def subset(self, mask) -> "SampleSet":
        return SampleSet(self.x[mask], self.frames[mask], self.theta[mask], self.H[mask],
                         self.dA[mask], self.h, self.graded, self.extent,
                         None if self.chart is None else self.chart[mask])

    def transformed(self, U: np.ndarray) -> "SampleSet":
        """Image under a linear isometry ``U`` (unitary maps keep angles only if U(2))."""
        fr = np.einsum("ij,njk->nik", U, self.frames)
        th = geom.frame_angle(fr)
        if self.graded:
            th = self.theta + geom.wrap_angle(th - self.theta)
        return SampleSet(self.x @ U.T, fr, th, self.H @ U.T, self.dA.copy(), self.h,
                         self.graded, self.extent, self.chart)

    def scaled(self, lam: float, center=None) -> "SampleSet":
        """``lam (x - center)``; mean curvature scales by 1/lam, area by lam^2."""
        c = np.zeros(4) if center is None else np.asarray(center, dtype=float)
        return SampleSet(lam * (self.x - c), self.frames, self.theta, self.H / lam,
                         self.dA * lam ** 2, self.h * lam, self.graded,
                         self.extent * lam if np.isfinite(self.extent) else np.inf,
                         self.chart)

    @staticmethod
    def concat(parts) -> "SampleSet":
        parts = list(parts)
        chart = None
        if all(p.chart is not None for p in parts):
            chart = np.concatenate([p.chart for p in parts])
        return SampleSet(np.concatenate([p.x for p in parts]),
                         np.concatenate([p.frames for p in parts]),
                         np.concatenate([p.theta for p in parts]),
                         np.concatenate([p.H for p in parts]),
                         np.concatenate([p.dA for p in parts]),
                         max(p.h for p in parts), all(p.graded for p in parts),
                         min(p.extent for p in parts), chart)

    def normal_position(self) -> np.ndarray:
        """``x^perp``: normal projection of the position vector."""
        t = np.einsum("nik,ni->nk", self.frames, self.x)
        return self.x - np.einsum("nik,nk->ni", self.frames, t)

    def omega_defect(self) -> np.ndarray:
        return np.abs(np.einsum("ni,ij,nj->n", self.frames[:, :, 0], KAHLER_STD,
                                self.frames[:, :, 1]))


def _frames_from_tangents(T1: np.ndarray, T2: np.ndarray) -> np.ndarray:
    e1 = T1 / np.linalg.norm(T1, axis=-1, keepdims=True)
    v = T2 - np.sum(T2 * e1, axis=-1, keepdims=True) * e1
    e2 = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return np.stack([e1, e2], axis=-1)


def _trap_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def _dual_lengths(s: np.ndarray) -> np.ndarray:
    """Trapezoid weights for a nonuniform 1D grid."""
    d = np.diff(s)
    w = np.zeros_like(s)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


# ---------------------------------------------------------------- arrays <-> json

def array_to_json(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {"dtype": str(a.dtype), "shape": list(a.shape),
            "b64": base64.b64encode(a.tobytes()).decode("ascii")}


def array_from_json(d: dict) -> np.ndarray:
    if isinstance(d, list):
        return np.asarray(d)
    buf = base64.b64decode(d["b64"])
    return np.frombuffer(buf, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


# ---------------------------------------------------------------- potential graphs

@dataclass
class PotentialGraph:
    """Graph ``{E p + J E grad f(p)}`` of an exact 1-form over a Lagrangian plane.

    ``kind='cartesian'``: axes ``u`` (n_u,), ``v`` (n_v,) uniform, ``f`` (n_u, n_v).
    ``kind='polar'``: radii ``u`` (n_r,), angles ``v`` (n_phi,) periodic
    (``v[k] = 2 pi k / n_phi``), ``f`` (n_r, n_phi).
    """

    base: LagrangianPlane
    u: np.ndarray
    v: np.ndarray
    f: np.ndarray
    kind: str = "cartesian"
    boundary: Optional[np.ndarray] = None  # Dirichlet data (mask of frozen nodes)

    kind_tag = "potential"

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.f.shape != (len(self.u), len(self.v)):
            raise DegenerateGrid("potential shape does not match grid")
        if len(self.u) < 3 or len(self.v) < 3:
            raise DegenerateGrid("need at least 3 nodes per axis")
        if not np.all(np.isfinite(self.f)):
            raise DegenerateGrid("non-finite potential")

    @property
    def h(self) -> float:
        if self.kind == "polar":
            return float(max(self.u[1] - self.u[0], self.u[-1] * (self.v[1] - self.v[0])))
        return float(self.u[1] - self.u[0])

    @property
    def theta_base(self) -> float:
        return geom.lagrangian_angle(self.base)

    def frozen_mask(self) -> np.ndarray:
        if self.boundary is not None:
            return self.boundary
        m = np.zeros(self.f.shape, dtype=bool)
        m[0, :] = m[-1, :] = True
        if self.kind == "cartesian":
            m[:, 0] = m[:, -1] = True
        return m

    # derivatives in the plane's orthonormal coordinates
    def derivatives(self, f: Optional[np.ndarray] = None):
        """Return gradient (2, ...) and Hessian entries (hxx, hxy, hyy) at all nodes.

        Cartesian: second order centered differences in the interior, second
        order one-sided at the edges.  Polar: components in the Cartesian
        frame of the plane, periodic in angle.
        """
        f = self.f if f is None else f
        if self.kind == "cartesian":
            hu = self.u[1] - self.u[0]
            hv = self.v[1] - self.v[0]
            fx, fy = np.gradient(f, hu, hv, edge_order=2)
            fxx = np.empty_like(f)
            fyy = np.empty_like(f)
            fxx[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / hu ** 2
            fxx[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / hu ** 2 if len(self.u) > 3 else fxx[1]
            fxx[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / hu ** 2 if len(self.u) > 3 else fxx[-2]
            fyy[:, 1:-1] = (f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]) / hv ** 2
            fyy[:, 0] = (2 * f[:, 0] - 5 * f[:, 1] + 4 * f[:, 2] - f[:, 3]) / hv ** 2 if len(self.v) > 3 else fyy[:, 1]
            fyy[:, -1] = (2 * f[:, -1] - 5 * f[:, -2] + 4 * f[:, -3] - f[:, -4]) / hv ** 2 if len(self.v) > 3 else fyy[:, -2]
            fxy = np.gradient(fx, hv, axis=1, edge_order=2)
            return np.stack([fx, fy]), (fxx, fxy, fyy)
        r = self.u[:, None]
        dphi = self.v[1] - self.v[0]
        fr = np.gradient(f, self.u, axis=0, edge_order=2)
        fp = (np.roll(f, -1, 1) - np.roll(f, 1, 1)) / (2 * dphi)
        fpp = (np.roll(f, -1, 1) - 2 * f + np.roll(f, 1, 1)) / dphi ** 2
        frr = _second_derivative_nonuniform(f, self.u)
        frp = (np.roll(fr, -1, 1) - np.roll(fr, 1, 1)) / (2 * dphi)
        hrr = frr
        hpp = fr / r + fpp / r ** 2
        hrp = frp / r - fp / r ** 2
        c, s = np.cos(self.v)[None, :], np.sin(self.v)[None, :]
        gx = fr * c - fp / r * s
        gy = fr * s + fp / r * c
        # rotate the (r, phi) Hessian into Cartesian components
        hxx = hrr * c * c - 2 * hrp * c * s + hpp * s * s
        hyy = hrr * s * s + 2 * hrp * c * s + hpp * c * c
        hxy = (hrr - hpp) * c * s + hrp * (c * c - s * s)
        return np.stack([gx, gy]), (hxx, hxy, hyy)

    def theta_field(self, f: Optional[np.ndarray] = None) -> np.ndarray:
        _, (hxx, hxy, hyy) = self.derivatives(f)
        tr = hxx + hyy
        det = hxx * hyy - hxy ** 2
        return self.theta_base + np.arctan2(tr, 1.0 - det)

    def plane_points(self) -> np.ndarray:
        """Plane coordinates of the nodes, shape (n_u, n_v, 2)."""
        if self.kind == "polar":
            r, p = np.meshgrid(self.u, self.v, indexing="ij")
            return np.stack([r * np.cos(p), r * np.sin(p)], axis=-1)
        a, b = np.meshgrid(self.u, self.v, indexing="ij")
        return np.stack([a, b], axis=-1)

    def quad_weights(self) -> np.ndarray:
        if self.kind == "polar":
            wr = _dual_lengths(self.u) * self.u
            return np.outer(wr, np.full(len(self.v), self.v[1] - self.v[0]))
        return np.outer(_trap_weights(len(self.u), self.u[1] - self.u[0]),
                        _trap_weights(len(self.v), self.v[1] - self.v[0]))

    def positions(self, f: Optional[np.ndarray] = None) -> np.ndarray:
        g, _ = self.derivatives(f)
        E = self.base.frame
        p = self.plane_points()
        return p @ E.T + np.moveaxis(g, 0, -1) @ (J_STD @ E).T

    def replace_f(self, f: np.ndarray) -> "PotentialGraph":
        return replace(self, f=np.asarray(f, dtype=float))

    def to_dict(self) -> dict:
        return {"kind": "potential", "grid": self.kind, "base": self.base.to_dict(),
                "u": array_to_json(self.u), "v": array_to_json(self.v),
                "f": array_to_json(self.f),
                "boundary": None if self.boundary is None else array_to_json(self.boundary)}

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialGraph":
        b = d.get("boundary")
        return cls(LagrangianPlane.from_dict(d["base"]), array_from_json(d["u"]),
                   array_from_json(d["v"]), array_from_json(d["f"]), d["grid"],
                   None if b is None else array_from_json(b).astype(bool))


def _second_derivative_nonuniform(f: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Second derivative along axis 0 on a possibly nonuniform grid."""
    out = np.empty_like(f)
    h1 = (x[1:-1] - x[:-2])[:, None]
    h2 = (x[2:] - x[1:-1])[:, None]
    out[1:-1] = 2 * (h1 * f[2:] - (h1 + h2) * f[1:-1] + h2 * f[:-2]) / (h1 * h2 * (h1 + h2))
    out[0] = out[1] + (out[1] - out[2]) * (x[0] - x[1]) / (x[1] - x[2])
    out[-1] = out[-2] + (out[-2] - out[-3]) * (x[-1] - x[-2]) / (x[-2] - x[-3])
    return out


def cartesian_graph(base: LagrangianPlane, fn, extent: float, n: int) -> PotentialGraph:
    """Potential graph over the square [-extent, extent]^2 with ``n`` nodes per axis."""
    t = np.linspace(-extent, extent, n)
    X, Y = np.meshgrid(t, t, indexing="ij")
    return PotentialGraph(base, t, t, fn(X, Y), "cartesian")


def polar_graph(base: LagrangianPlane, fn, r_in: float, r_out: float, n_r: int,
                n_phi: int) -> PotentialGraph:
    """Annular potential graph; ``fn(x, y)`` evaluated in plane coordinates."""
    r = np.linspace(r_in, r_out, n_r)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    R, P = np.meshgrid(r, phi, indexing="ij")
    return PotentialGraph(base, r, phi, fn(R * np.cos(P), R * np.sin(P)), "polar")


def theta_of_graph(g: PotentialGraph, node) -> float:
    """Lagrangian angle at an interior node: theta_base + arctan l1 + arctan l2."""
    i, j = node
    nu, nv = g.f.shape
    interior_v = (0 < j < nv - 1) or g.kind == "polar"
    if not (0 < i < nu - 1 and interior_v):
        raise BoundaryNode(f"node {node} is on the boundary")
    return float(g.theta_field()[i, j])


def _embed_potential(g: PotentialGraph, label: int = 0) -> SampleSet:
    grad, (hxx, hxy, hyy) = g.derivatives()
    E = g.base.frame
    JE = J_STD @ E
    p = g.plane_points()
    X = p @ E.T + np.moveaxis(grad, 0, -1) @ JE.T
    T1 = E[:, 0] + hxx[..., None] * JE[:, 0] + hxy[..., None] * JE[:, 1]
    T2 = E[:, 1] + hxy[..., None] * JE[:, 0] + hyy[..., None] * JE[:, 1]
    frames = _frames_from_tangents(T1, T2)
    theta = g.theta_field()
    # mean curvature H = J grad_M theta
    if g.kind == "polar":
        tr = np.gradient(theta, g.u, axis=0, edge_order=2)
        dphi = g.v[1] - g.v[0]
        tp = (np.roll(theta, -1, 1) - np.roll(theta, 1, 1)) / (2 * dphi)
        c, s = np.cos(g.v)[None, :], np.sin(g.v)[None, :]
        r = g.u[:, None]
        tx = tr * c - tp / r * s
        ty = tr * s + tp / r * c
    else:
        tx, ty = np.gradient(theta, g.u[1] - g.u[0], g.v[1] - g.v[0], edge_order=2)
    g11 = np.sum(T1 * T1, -1)
    g12 = np.sum(T1 * T2, -1)
    g22 = np.sum(T2 * T2, -1)
    det = g11 * g22 - g12 ** 2
    a = (g22 * tx - g12 * ty) / det
    b = (-g12 * tx + g11 * ty) / det
    grad_theta = a[..., None] * T1 + b[..., None] * T2
    H = grad_theta @ J_STD.T
    dA = np.sqrt(det) * g.quad_weights()
    ext = float(g.u[-1]) if g.kind == "polar" else float(min(abs(g.u[0]), g.u[-1], abs(g.v[0]), g.v[-1]))
    n = X.shape[0] * X.shape[1]
    return SampleSet(X.reshape(-1, 4), frames.reshape(-1, 4, 2), theta.reshape(-1),
                     H.reshape(-1, 4), dA.reshape(-1), g.h, True, ext,
                     np.full(n, label))


# ---------------------------------------------------------------- two-chart graphs

def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


@dataclass
class TwoChartGraph:
    """Annular potential charts over each plane of a pair.

    ``chart1`` lives over ``V.p1`` and ``chart2`` over ``V.p2`` (both polar).
    When ``eps`` is set the charts describe the two halves of a neck and are
    blended by a partition of unity in ``log(|z| / |w|)`` of width ``blend``.
    """

    V: PlanePair
    chart1: PotentialGraph
    chart2: PotentialGraph
    eps: Optional[float] = None
    blend: float = 0.1

    kind_tag = "twochart"

    @property
    def h(self) -> float:
        return max(self.chart1.h, self.chart2.h)

    def to_dict(self) -> dict:
        return {"kind": "twochart", "V": self.V.to_dict(), "chart1": self.chart1.to_dict(),
                "chart2": self.chart2.to_dict(), "eps": self.eps, "blend": self.blend}

    @classmethod
    def from_dict(cls, d: dict) -> "TwoChartGraph":
        return cls(PlanePair.from_dict(d["V"]), PotentialGraph.from_dict(d["chart1"]),
                   PotentialGraph.from_dict(d["chart2"]), d.get("eps"), d.get("blend", 0.1))


def _embed_twochart(t: TwoChartGraph) -> SampleSet:
    s1 = _embed_potential(t.chart1, 1)
    s2 = _embed_potential(t.chart2, 2)
    if t.eps is not None:
        nc = geom.neck_coordinates(t.V)
        for s, sign in ((s1, 1.0), (s2, -1.0)):
            z, w = nc.zw(s.x)
            lr = np.log(np.abs(z) / np.maximum(np.abs(w), 1e-300))
            s.dA = s.dA * _smoothstep((sign * lr + t.blend) / (2 * t.blend))
    out = SampleSet.concat([s1, s2])
    out.extent = min(t.chart1.u[-1], t.chart2.u[-1])
    return out


def graph_over_pair(V: PlanePair, fn1, fn2, r_in: float, r_out: float, n_r: int = 81,
                    n_phi: int = 96) -> TwoChartGraph:
    """Two annular charts with potentials ``fn1``, ``fn2`` (plane coordinates)."""
    return TwoChartGraph(V, polar_graph(V.p1, fn1, r_in, r_out, n_r, n_phi),
                         polar_graph(V.p2, fn2, r_in, r_out, n_r, n_phi))


def lawlor_two_chart(V: PlanePair, eps: float, r_out: float, n_r: int = 121,
                     n_phi: int = 96, inner: float = 0.8) -> TwoChartGraph:
    """Lawlor neck ``{zw = eps}`` (real eps) as two blended annular charts.

    Each sheet of the neck is the graph of an exact 1-form over a punctured
    plane; the potential is recovered by integrating the computed 1-form
    radially and in angle.  Charts start at ``inner * sqrt(|eps|)``.
    """
    eps = float(eps)
    if eps == 0:
        raise ZeroEps("eps must be nonzero")
    nc = geom.neck_coordinates(V)
    r_in = inner * np.sqrt(abs(eps))
    charts = []
    for P, which in ((V.p1, 1), (V.p2, 2)):
        r = np.geomspace(r_in, r_out, n_r)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        E = P.frame
        JE = J_STD @ E
        # for each plane point p find the neck point whose projection is p
        R, Ph = np.meshgrid(r, phi, indexing="ij")
        p = np.stack([R * np.cos(Ph), R * np.sin(Ph)], -1)
        grad = _neck_sheet_gradient(nc, eps, E, JE, p, which)
        # integrate grad f: radially from the inner circle, fixing the angular profile there
        gr = grad[..., 0] * np.cos(Ph) + grad[..., 1] * np.sin(Ph)
        gp = (-grad[..., 0] * np.sin(Ph) + grad[..., 1] * np.cos(Ph)) * R
        f0 = np.concatenate([[0.0], np.cumsum(0.5 * (gp[0, 1:] + gp[0, :-1]) * np.diff(phi))])
        f = np.zeros_like(R)
        f[0] = f0 - f0.mean()
        dr = np.diff(r)[:, None]
        # Simpson-like radial integration with midpoint gradients
        pm = 0.5 * (p[1:] + p[:-1])
        gm = _neck_sheet_gradient(nc, eps, E, JE, pm, which)
        Phm = Ph[:-1]
        grm = gm[..., 0] * np.cos(Phm) + gm[..., 1] * np.sin(Phm)
        inc = dr * (gr[:-1] + 4 * grm + gr[1:]) / 6
        f[1:] = f[0] + np.cumsum(inc, axis=0)
        charts.append(PotentialGraph(P, r, phi, f, "polar"))
    return TwoChartGraph(V, charts[0], charts[1], eps=eps)


def _neck_sheet_gradient(nc, eps, E, JE, p, which):
    """Gradient of the potential of the neck sheet over a plane at plane points p."""
    shp = p.shape[:-1]
    pts = p.reshape(-1, 2)
    target = pts @ E.T
    # initial guess from the orthogonal model, then Newton on the coordinate z (or w)
    z0 = target @ (nc.cz if which == 1 else nc.cw)
    q = z0.copy()
    for _ in range(30):
        if which == 1:
            x = nc.point(q, eps / q)
            dx = nc.point(np.ones_like(q), -eps / q ** 2)
            dxi = nc.point(1j * np.ones_like(q), -1j * eps / q ** 2)
        else:
            x = nc.point(eps / q, q)
            dx = nc.point(-eps / q ** 2, np.ones_like(q))
            dxi = nc.point(-1j * eps / q ** 2, 1j * np.ones_like(q))
        res = x @ E - pts
        a11 = dx @ E
        a12 = dxi @ E
        A = np.stack([a11, a12], -1)  # (n, 2, 2) columns for Re, Im increments
        step = np.linalg.solve(A, res[..., None])[..., 0]
        q = q - (step[:, 0] + 1j * step[:, 1])
        if np.abs(res).max() < 1e-14:
            break
    n = x - (x @ E) @ E.T
    g = n @ JE  # J E grad f = n  =>  grad f = (JE)^T n
    return g.reshape(shp + (2,))


# ---------------------------------------------------------------- meshes

@dataclass
class Mesh4D:
    """Oriented triangle mesh in R^4 with fixed boundary vertices."""

    vertices: np.ndarray
    faces: np.ndarray
    boundary: np.ndarray  # bool mask
    graded_hint: bool = True
    theta_ref: Optional[float] = None  # lift reference for angles

    kind_tag = "mesh"

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.boundary = np.asarray(self.boundary, dtype=bool)

    @property
    def h(self) -> float:
        return float(np.median(self.edge_lengths()))

    def edges(self) -> np.ndarray:
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def face_vectors(self):
        v = self.vertices
        f = self.faces
        return v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]

    def face_areas(self) -> np.ndarray:
        a, b = self.face_vectors()
        aa = np.sum(a * a, 1)
        bb = np.sum(b * b, 1)
        ab = np.sum(a * b, 1)
        return 0.5 * np.sqrt(np.maximum(aa * bb - ab * ab, 0.0))

    def omega_defect(self) -> np.ndarray:
        """Per-face ``|omega(e1, e2)| / (2 area)``."""
        a, b = self.face_vectors()
        return np.abs(np.einsum("ni,ij,nj->n", a, KAHLER_STD, b)) / (2 * self.face_areas())

    def min_angle(self) -> float:
        return float(np.degrees(_face_angles(self.vertices, self.faces).min()))

    def check(self):
        if np.any(self.face_areas() <= 0):
            raise MeshTangled("degenerate face")
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        _, counts = np.unique(np.sort(e, 1), axis=0, return_counts=True)
        if counts.max() > 2:
            raise MeshTangled("non-manifold edge")

    def to_dict(self) -> dict:
        return {"kind": "mesh", "vertices": array_to_json(self.vertices),
                "faces": array_to_json(self.faces), "boundary": array_to_json(self.boundary),
                "theta_ref": self.theta_ref}

    @classmethod
    def from_dict(cls, d: dict) -> "Mesh4D":
        return cls(array_from_json(d["vertices"]), array_from_json(d["faces"]),
                   array_from_json(d["boundary"]).astype(bool), theta_ref=d.get("theta_ref"))


def _face_angles(V, F) -> np.ndarray:
    out = []
    for k in range(3):
        a = V[F[:, (k + 1) % 3]] - V[F[:, k]]
        b = V[F[:, (k + 2) % 3]] - V[F[:, k]]
        c = np.sum(a * b, 1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out.append(np.arccos(np.clip(c, -1, 1)))
    return np.stack(out, 1)


def cotan_laplacian(V: np.ndarray, F: np.ndarray):
    """Cotangent stiffness matrix ``L`` (negative semidefinite) and lumped mass.

    ``(L @ X) / mass`` approximates the Laplace-Beltrami operator applied to
    the coordinate functions, i.e. the mean curvature vector.
    """
    from scipy.sparse import coo_matrix
    n = len(V)
    I, Jx, W = [], [], []
    for k in range(3):
        i, j, o = F[:, (k + 1) % 3], F[:, (k + 2) % 3], F[:, k]
        a = V[i] - V[o]
        b = V[j] - V[o]
        dot = np.sum(a * b, 1)
        cross = np.sqrt(np.maximum(np.sum(a * a, 1) * np.sum(b * b, 1) - dot ** 2, 1e-300))
        cot = 0.5 * dot / cross
        I += [i, j, i, j]
        Jx += [j, i, i, j]
        W += [cot, cot, -cot, -cot]
    L = coo_matrix((np.concatenate(W), (np.concatenate(I), np.concatenate(Jx))), shape=(n, n)).tocsr()
    area = Mesh4D(V, F, np.zeros(n, bool)).face_areas()
    mass = np.zeros(n)
    for k in range(3):
        np.add.at(mass, F[:, k], area / 3)
    return L, mass


def _embed_mesh(m: Mesh4D) -> SampleSet:
    V, F = m.vertices, m.faces
    a, b = m.face_vectors()
    area = m.face_areas()
    fr = _frames_from_tangents(a, b)
    # per-vertex tangent plane: dominant 2-plane of the area-weighted projector sum
    P = np.einsum("f,fik,fjk->fij", area, fr, fr)
    S = np.zeros((len(V), 4, 4))
    biv = np.einsum("f,fi,fj->fij", area, fr[:, :, 0], fr[:, :, 1])
    B = np.zeros((len(V), 4, 4))
    for k in range(3):
        np.add.at(S, F[:, k], P)
        np.add.at(B, F[:, k], biv - np.transpose(biv, (0, 2, 1)))
    w, U = np.linalg.eigh(S)
    e1, e2 = U[:, :, 3], U[:, :, 2]
    sgn = np.sign(np.einsum("ni,nij,nj->n", e1, B, e2))
    e2 = e2 * np.where(sgn == 0, 1, sgn)[:, None]
    frames = np.stack([e1, e2], -1)
    theta = geom.frame_angle(frames)
    ref = m.theta_ref if m.theta_ref is not None else float(np.median(theta))
    theta = ref + geom.wrap_angle(theta - ref)
    L, mass = cotan_laplacian(V, F)
    H = (L @ V) / mass[:, None]
    H[m.boundary] = 0.0
    ext = float(np.linalg.norm(V[m.boundary], axis=1).min()) if m.boundary.any() else np.inf
    return SampleSet(V.copy(), frames, theta, H, mass, m.h, m.graded_hint, ext,
                     np.zeros(len(V), dtype=int))


def grid_mesh(P: np.ndarray, periodic_v: bool = False) -> Mesh4D:
    """Triangulate a (n_u, n_v, 4) array of points laid out on a grid."""
    nu, nv = P.shape[:2]
    idx = np.arange(nu * nv).reshape(nu, nv)
    cols = nv if periodic_v else nv - 1
    faces = []
    for i in range(nu - 1):
        for j in range(cols):
            a, b = idx[i, j], idx[i + 1, j]
            c, d = idx[i + 1, (j + 1) % nv], idx[i, (j + 1) % nv]
            if (i + j) % 2 == 0:
                faces += [(a, b, c), (a, c, d)]
            else:
                faces += [(a, b, d), (b, c, d)]
    bnd = np.zeros((nu, nv), bool)
    bnd[0] = bnd[-1] = True
    if not periodic_v:
        bnd[:, 0] = bnd[:, -1] = True
    return Mesh4D(P.reshape(-1, 4), np.array(faces), bnd.reshape(-1))


def plane_mesh(plane: LagrangianPlane, extent: float, n: int) -> Mesh4D:
    t = np.linspace(-extent, extent, n)
    A, B = np.meshgrid(t, t, indexing="ij")
    P = A[..., None] * plane.e1 + B[..., None] * plane.e2
    m = grid_mesh(P)
    m.theta_ref = geom.lagrangian_angle(plane)
    return m


def sphere_mesh(r0: float, level: int = 4) -> Mesh4D:
    """Icosphere of radius r0 in the (x1, y1, x2) subspace (a non-Lagrangian control)."""
    t = (1 + 5 ** 0.5) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t), (0, -1, -t),
         (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    V = np.array(v, float)
    V /= np.linalg.norm(V, axis=1)[:, None]
    F = np.array(f)
    for _ in range(level):
        V, F = _subdivide(V, F)
        V /= np.linalg.norm(V, axis=1)[:, None]
    V4 = np.zeros((len(V), 4))
    V4[:, :3] = r0 * V
    return Mesh4D(V4, F, np.zeros(len(V), bool), graded_hint=False)


def _subdivide(V, F):
    e = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    es = np.sort(e, 1)
    uniq, inv = np.unique(es, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mids = 0.5 * (V[uniq[:, 0]] + V[uniq[:, 1]])
    n = len(V)
    m = len(F)
    a, b, c = F[:, 0], F[:, 1], F[:, 2]
    ab, bc, ca = n + inv[:m], n + inv[m:2 * m], n + inv[2 * m:]
    F2 = np.concatenate([np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
                         np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1)])
    return np.vstack([V, mids]), F2


def lawlor_mesh(V: PlanePair, eps: complex, R: float, n_phi: int = 64) -> Mesh4D:
    """Conformal log-polar mesh of ``{zw = eps}`` truncated near radius R."""
    nc = geom.neck_coordinates(V)
    s, phi = geom.lawlor_grid(eps, R, n_phi)
    S, Ph = np.meshgrid(s, phi, indexing="ij")
    P = geom.lawlor_point(nc, eps, S, Ph)
    m = grid_mesh(P, periodic_v=True)
    m.theta_ref = V.theta_V
    return m


def lawlor_samples(V: PlanePair, eps: complex, R: float, n_s: int = 201,
                   n_phi: int = 128) -> SampleSet:
    """Exact samples of ``{zw = eps}``: analytic frames, theta = theta_V, H = 0.

    Parameterized by ``z = sqrt|eps| exp(s + i phi)`` on a uniform
    (s, phi) grid with trapezoid weights in ``s``.
    """
    nc = geom.neck_coordinates(V)
    eps = complex(eps)
    if eps == 0:
        raise ZeroEps("eps must be nonzero")
    a = abs(eps)
    Smax = 0.5 * np.arccosh(max(R * R / (2 * a), 1.0))
    s = np.linspace(-Smax, Smax, n_s)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    S, Ph = np.meshgrid(s, phi, indexing="ij")
    z = np.sqrt(a) * np.exp(S + 1j * Ph)
    x = nc.point(z, eps / z)
    # d/ds: dz = z, dw = -w ; d/dphi: dz = i z, dw = -i w
    Ts = nc.point(z, -eps / z)
    Tp = nc.point(1j * z, -1j * eps / z)
    frames = _frames_from_tangents(Ts, Tp)
    theta = geom.frame_angle(frames)
    theta = V.theta_V + geom.wrap_angle(theta - V.theta_V)
    g11 = np.sum(Ts * Ts, -1)
    g22 = np.sum(Tp * Tp, -1)
    g12 = np.sum(Ts * Tp, -1)
    dA = np.sqrt(g11 * g22 - g12 ** 2) * np.outer(_dual_lengths(s), np.full(n_phi, phi[1]))
    hs = float(np.max(np.sqrt(g11)) * (s[1] - s[0]))
    out = SampleSet(x.reshape(-1, 4), frames.reshape(-1, 4, 2), theta.reshape(-1),
                    np.zeros((x.size // 4, 4)), dA.reshape(-1), hs, True,
                    float(np.min(np.linalg.norm(x[[0, -1]], axis=-1))),
                    np.where(np.abs(z) >= np.abs(eps / z), 1, 2).reshape(-1))
    return out


def plane_samples(plane: LagrangianPlane, R: float, n_r: int = 200, n_phi: int = 128) -> SampleSet:
    """Exact polar samples of a plane out to radius R (Gauss-Legendre in r)."""
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * R * (xr + 1)
    wr = 0.5 * R * wr * r
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    Rr, Ph = np.meshgrid(r, phi, indexing="ij")
    E = plane.frame
    x = (Rr * np.cos(Ph))[..., None] * E[:, 0] + (Rr * np.sin(Ph))[..., None] * E[:, 1]
    n = n_r * n_phi
    frames = np.broadcast_to(E, (n, 4, 2)).copy()
    dA = np.outer(wr, np.full(n_phi, 2 * np.pi / n_phi))
    return SampleSet(x.reshape(-1, 4), frames, np.full(n, geom.lagrangian_angle(plane)),
                     np.zeros((n, 4)), dA.reshape(-1), R / n_r, True, float(R),
                     np.zeros(n, dtype=int))


def pair_samples(V: PlanePair, R: float, n_r: int = 200, n_phi: int = 128) -> SampleSet:
    a = plane_samples(V.p1, R, n_r, n_phi)
    b = plane_samples(V.p2, R, n_r, n_phi)
    a.chart = np.ones(len(a), int)
    b.chart = np.full(len(b), 2)
    return SampleSet.concat([a, b])


# ---------------------------------------------------------------- curve products

@dataclass
class CurveProduct:
    """Product ``gamma1 x gamma2`` of two polylines in C."""

    gamma1: np.ndarray
    gamma2: np.ndarray
    closed1: bool = True
    closed2: bool = True

    kind_tag = "curves"

    def __post_init__(self):
        self.gamma1 = np.asarray(self.gamma1, dtype=complex)
        self.gamma2 = np.asarray(self.gamma2, dtype=complex)

    @property
    def h(self) -> float:
        return float(max(_seg(self.gamma1, self.closed1).max(), _seg(self.gamma2, self.closed2).max()))

    def to_dict(self) -> dict:
        return {"kind": "curves", "gamma1": array_to_json(self.gamma1),
                "gamma2": array_to_json(self.gamma2), "closed1": self.closed1,
                "closed2": self.closed2}

    @classmethod
    def from_dict(cls, d: dict) -> "CurveProduct":
        return cls(array_from_json(d["gamma1"]), array_from_json(d["gamma2"]),
                   d["closed1"], d["closed2"])


def _seg(g: np.ndarray, closed: bool) -> np.ndarray:
    d = np.diff(np.concatenate([g, g[:1]]) if closed else g)
    return np.abs(d)


def curve_geometry(g: np.ndarray, closed: bool):
    """Unit tangent, curvature vector and dual length of a polyline (complex).

    Closed curves use periodic three-point formulas; open curves use one-sided
    tangents and zero curvature at the ends.
    """
    if closed:
        gp, gm = np.roll(g, -1), np.roll(g, 1)
    else:
        gp = np.concatenate([g[1:], g[-1:]])
        gm = np.concatenate([g[:1], g[:-1]])
    a = np.abs(gp - g)
    b = np.abs(g - gm)
    T = gp - gm
    T = T / np.abs(T)
    k = np.zeros_like(g)
    inner = slice(None) if closed else slice(1, -1)
    k[inner] = 2 * ((gp - g) / np.maximum(a, 1e-300) - (g - gm) / np.maximum(b, 1e-300))[inner] / (a + b)[inner]
    dual = 0.5 * (a + b)
    if not closed:
        dual[0], dual[-1] = a[0] / 2, b[-1] / 2
    return T, k, dual


def polygon_area(g: np.ndarray) -> float:
    return 0.5 * float(np.sum(g.real * np.roll(g.imag, -1) - np.roll(g.real, -1) * g.imag))


def circle(r: float, n: int, center: complex = 0) -> np.ndarray:
    t = 2 * np.pi * np.arange(n) / n
    return center + r * np.exp(1j * t)


def _embed_curves(c: CurveProduct) -> SampleSet:
    T1, k1, d1 = curve_geometry(c.gamma1, c.closed1)
    T2, k2, d2 = curve_geometry(c.gamma2, c.closed2)
    n1, n2 = len(c.gamma1), len(c.gamma2)
    G1, G2 = np.meshgrid(c.gamma1, c.gamma2, indexing="ij")
    x = np.stack([G1.real, G1.imag, G2.real, G2.imag], -1)
    A1, A2 = np.meshgrid(T1, T2, indexing="ij")
    z = np.zeros_like(G1.real)
    e1 = np.stack([A1.real, A1.imag, z, z], -1)
    e2 = np.stack([z, z, A2.real, A2.imag], -1)
    frames = np.stack([e1, e2], -1)
    theta = np.angle(A1) + np.angle(A2)
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    H = np.stack([K1.real, K1.imag, K2.real, K2.imag], -1)
    dA = np.outer(d1, d2)
    graded = not (c.closed1 or c.closed2)
    ends = [min(abs(g[0]), abs(g[-1])) for g, cl in ((c.gamma1, c.closed1), (c.gamma2, c.closed2)) if not cl]
    ext = float(min(ends)) if ends else np.inf
    return SampleSet(x.reshape(-1, 4), frames.reshape(-1, 4, 2), theta.reshape(-1),
                     H.reshape(-1, 4), dA.reshape(-1), c.h, graded, ext,
                     np.zeros(n1 * n2, dtype=int))


# ---------------------------------------------------------------- equivariant profiles

@dataclass
class EquivariantProfile:
    """SO(2)-invariant Lagrangian ``{gamma(s) (cos a, sin a)}``.

    The profile ``gamma`` is an open polyline in C with pinned ends.  Its
    Lagrangian angle is ``arg(gamma gamma')`` and Lawlor necks asymptotic to
    the canonical pair are the hyperbolas ``Re(gamma) Im(gamma) = eps``.
    """

    gamma: np.ndarray
    n_alpha: int = 32

    kind_tag = "profile"

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=complex)

    @property
    def h(self) -> float:
        return float(np.abs(np.diff(self.gamma)).max())

    @property
    def rmin(self) -> float:
        return float(np.abs(self.gamma).min())

    def theta(self) -> np.ndarray:
        g = self.gamma
        t = np.empty_like(g)
        t[1:-1] = g[2:] - g[:-2]
        t[0] = g[1] - g[0]
        t[-1] = g[-1] - g[-2]
        return np.unwrap(np.angle(g) + np.angle(t))

    def arclength(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(np.abs(np.diff(self.gamma)))])

    def to_dict(self) -> dict:
        return {"kind": "profile", "gamma": array_to_json(self.gamma), "n_alpha": self.n_alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "EquivariantProfile":
        return cls(array_from_json(d["gamma"]), d.get("n_alpha", 32))


def profile_velocity(g: np.ndarray):
    """Normal velocity ``theta_s nu`` of the profile (ends pinned).

    Returns (velocity, theta, arclength).  ``theta_s`` uses the three-point
    nonuniform derivative.
    """
    t = np.empty_like(g)
    t[1:-1] = g[2:] - g[:-2]
    t[0] = g[1] - g[0]
    t[-1] = g[-1] - g[-2]
    th = np.unwrap(np.angle(g) + np.angle(t))
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(g)))])
    h1 = s[1:-1] - s[:-2]
    h2 = s[2:] - s[1:-1]
    ths = np.zeros_like(th)
    ths[1:-1] = (h1 ** 2 * th[2:] - h2 ** 2 * th[:-2] + (h2 ** 2 - h1 ** 2) * th[1:-1]) / (h1 * h2 * (h1 + h2))
    nu = 1j * t / np.abs(t)
    v = ths * nu
    v[0] = v[-1] = 0
    return v, th, s


def redistribute_profile(g: np.ndarray, n: int, floor: float) -> np.ndarray:
    """Resample a profile with density proportional to ``1 / max(|gamma|, floor)``."""
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(g)))])
    mid = 0.5 * (g[1:] + g[:-1])
    dens = np.abs(np.diff(g)) / np.maximum(np.abs(mid), floor)
    m = np.concatenate([[0.0], np.cumsum(dens)])
    target = np.linspace(0, m[-1], n)
    snew = np.interp(target, m, s)
    cs_r = CubicSpline(s, g.real)
    cs_i = CubicSpline(s, g.imag)
    out = cs_r(snew) + 1j * cs_i(snew)
    out[0], out[-1] = g[0], g[-1]
    return out


def _embed_profile(p: EquivariantProfile) -> SampleSet:
    g = p.gamma
    n = len(g)
    na = p.n_alpha
    alpha = 2 * np.pi * np.arange(na) / na
    v, th, s = profile_velocity(g)
    t = np.empty_like(g)
    t[1:-1] = g[2:] - g[:-2]
    t[0] = g[1] - g[0]
    t[-1] = g[-1] - g[-2]
    T = t / np.abs(t)
    # mean curvature of the surface: theta_s nu, with ends extrapolated
    ths = np.abs(v) * np.sign(np.real(np.conj(v) * 1j * T))
    ths[0], ths[-1] = ths[1], ths[-2]
    Hp = ths * 1j * T
    c, sa = np.cos(alpha), np.sin(alpha)

    def lift(q):
        q = q[:, None]
        return np.stack([(q * c).real, (q * c).imag, (q * sa).real, (q * sa).imag], -1)

    x = lift(g)
    e1 = lift(T)
    u = g / np.abs(g)
    e2 = np.stack([(-u[:, None] * sa).real, (-u[:, None] * sa).imag,
                   (u[:, None] * c).real, (u[:, None] * c).imag], -1)
    frames = np.stack([e1, e2], -1)
    theta = np.repeat(th[:, None], na, 1)
    H = lift(Hp)
    w = _dual_lengths(s) * np.abs(g) * (2 * np.pi / na)
    dA = np.repeat(w[:, None], na, 1)
    ext = float(min(abs(g[0]), abs(g[-1])))
    return SampleSet(x.reshape(-1, 4), frames.reshape(-1, 4, 2), theta.reshape(-1),
                     H.reshape(-1, 4), dA.reshape(-1), p.h, True, ext,
                     np.repeat(np.arange(n), na))


def sector_profile(eps0: float, delta: float, R: float, n: int) -> EquivariantProfile:
    """Hyperbola-like profile in a sector of opening ``pi/2 + delta``.

    The curve is a Lawlor hyperbola with parameter ``eps0`` mapped into the
    widened sector, with ends pinned on the bounding rays at radius ``R``.
    The sector is symmetric about the diagonal.  The profile runs from the
    ray near the imaginary axis to the ray near the real axis, so that the
    limiting pair is the canonical one with angle 0.
    """
    p1, p2 = -delta / 2, np.pi / 2 + delta / 2
    psimin = 0.5 * np.arcsin(min(1.0, 2 * eps0 / R ** 2))
    psi = np.linspace(np.pi / 2 - psimin, psimin, n)
    r = np.sqrt(2 * eps0 / np.sin(2 * psi))
    phi = p1 + psi * (p2 - p1) / (np.pi / 2)
    g = r * np.exp(1j * phi)
    g[0] = R * np.exp(1j * p2)
    g[-1] = R * np.exp(1j * p1)
    g = redistribute_profile(g, n, 0.3 * np.abs(g).min())
    return EquivariantProfile(g)


def bump_profile(p: EquivariantProfile, amp: float, center: float = 2.0,
                 width: float = 0.5) -> EquivariantProfile:
    """Rotate one arm of a profile by a Gaussian bump in ``|gamma|``.

    Only nodes before the point nearest the origin move, which breaks the
    reflection symmetry of :func:`sector_profile`.  Pinned ends are kept.
    """
    g = p.gamma.copy()
    k = int(np.argmin(np.abs(g)))
    r = np.abs(g[:k])
    g[:k] *= np.exp(1j * amp * np.exp(-((r - center) / width) ** 2))
    g[0], g[-1] = p.gamma[0], p.gamma[-1]
    return EquivariantProfile(g, p.n_alpha)


def lawlor_profile(eps: float, R: float, n: int) -> EquivariantProfile:
    """Hyperbola ``xy = eps`` from near the imaginary axis to the real axis."""
    U = np.arccosh(R * R / (2 * eps)) / 2 if R * R > 2 * eps else 0.0
    u = np.linspace(-U, U, n)
    g = np.sqrt(eps) * (np.exp(u) + 1j * np.exp(-u))
    return EquivariantProfile(redistribute_profile(g, n, 0.3 * np.sqrt(eps)))


# ---------------------------------------------------------------- dispatch

SurfaceState = Union[PotentialGraph, TwoChartGraph, Mesh4D, CurveProduct, EquivariantProfile]

_KINDS = {"potential": PotentialGraph, "twochart": TwoChartGraph, "mesh": Mesh4D,
          "curves": CurveProduct, "profile": EquivariantProfile}


def embed(s: SurfaceState) -> SampleSet:
    """Sample a surface state: positions, frames, angles, mean curvature, area weights."""
    if isinstance(s, PotentialGraph):
        return _embed_potential(s)
    if isinstance(s, TwoChartGraph):
        return _embed_twochart(s)
    if isinstance(s, Mesh4D):
        return _embed_mesh(s)
    if isinstance(s, CurveProduct):
        return _embed_curves(s)
    if isinstance(s, EquivariantProfile):
        return _embed_profile(s)
    if isinstance(s, SampleSet):
        return s
    raise DegenerateGrid(f"unknown state type {type(s).__name__}")


def state_to_dict(s: SurfaceState) -> dict:
    d = s.to_dict()
    d["schema"] = f"lmcflab.state/{STATE_SCHEMA}"
    return d


def state_from_dict(d: dict) -> SurfaceState:
    return _KINDS[d["kind"]].from_dict(d)


def state_h(s: SurfaceState) -> float:
    return float(s.h)


# ---------------------------------------------------------------- refine / coarsen / remesh

def refine(s: SurfaceState) -> SurfaceState:
    """Halve the spacing.  Existing nodes keep their values exactly."""
    if isinstance(s, PotentialGraph):
        if s.kind == "cartesian":
            u = _midpoints(s.u)
            v = _midpoints(s.v)
            sp = RectBivariateSpline(s.u, s.v, s.f, kx=3, ky=3)
            f = sp(u, v)
            f[::2, ::2] = s.f
            return PotentialGraph(s.base, u, v, f, "cartesian")
        u = _midpoints(s.u)
        n = len(s.v)
        v = 2 * np.pi * np.arange(2 * n) / (2 * n)
        # periodic extension in angle for the spline
        ve = np.concatenate([s.v[-3:] - 2 * np.pi, s.v, s.v[:3] + 2 * np.pi])
        fe = np.concatenate([s.f[:, -3:], s.f, s.f[:, :3]], axis=1)
        f = RectBivariateSpline(s.u, ve, fe, kx=3, ky=3)(u, v)
        f[::2, ::2] = s.f
        return PotentialGraph(s.base, u, v, f, "polar")
    if isinstance(s, TwoChartGraph):
        return TwoChartGraph(s.V, refine(s.chart1), refine(s.chart2), s.eps, s.blend)
    if isinstance(s, CurveProduct):
        return CurveProduct(_refine_curve(s.gamma1, s.closed1), _refine_curve(s.gamma2, s.closed2),
                            s.closed1, s.closed2)
    if isinstance(s, EquivariantProfile):
        return EquivariantProfile(_refine_curve(s.gamma, False), s.n_alpha)
    if isinstance(s, Mesh4D):
        V, F = _subdivide(s.vertices, s.faces)
        nb = len(V) - len(s.vertices)
        e = np.unique(np.sort(np.concatenate([s.faces[:, [0, 1]], s.faces[:, [1, 2]],
                                               s.faces[:, [2, 0]]]), 1), axis=0)
        bnd = np.concatenate([s.boundary, s.boundary[e[:, 0]] & s.boundary[e[:, 1]]])
        assert len(bnd) == len(s.vertices) + nb
        return Mesh4D(V, F, bnd, s.graded_hint, s.theta_ref)
    raise DegenerateGrid(f"cannot refine {type(s).__name__}")


def coarsen(s: SurfaceState) -> SurfaceState:
    """Keep every other node (inverse of :func:`refine` on grids and curves)."""
    if isinstance(s, PotentialGraph):
        if s.kind == "cartesian":
            if len(s.u) % 2 == 0 or len(s.v) % 2 == 0:
                raise DegenerateGrid("coarsening needs odd node counts")
            return PotentialGraph(s.base, s.u[::2], s.v[::2], s.f[::2, ::2], "cartesian")
        if len(s.u) % 2 == 0 or len(s.v) % 2:
            raise DegenerateGrid("coarsening needs odd radial and even angular counts")
        return PotentialGraph(s.base, s.u[::2], s.v[::2], s.f[::2, ::2], "polar")
    if isinstance(s, TwoChartGraph):
        return TwoChartGraph(s.V, coarsen(s.chart1), coarsen(s.chart2), s.eps, s.blend)
    if isinstance(s, CurveProduct):
        return CurveProduct(s.gamma1[::2], s.gamma2[::2], s.closed1, s.closed2)
    if isinstance(s, EquivariantProfile):
        return EquivariantProfile(s.gamma[::2], s.n_alpha)
    raise DegenerateGrid(f"cannot coarsen {type(s).__name__}")


def _midpoints(x):
    out = np.empty(2 * len(x) - 1)
    out[::2] = x
    out[1::2] = 0.5 * (x[1:] + x[:-1])
    return out


def _refine_curve(g, closed):
    n = len(g)
    if closed:
        t = np.arange(n + 1)
        ge = np.concatenate([g, g[:1]])
        cs = CubicSpline(t, np.stack([ge.real, ge.imag], 1), bc_type="periodic")
        tt = np.arange(2 * n) / 2
    else:
        t = np.arange(n)
        cs = CubicSpline(t, np.stack([g.real, g.imag], 1))
        tt = np.arange(2 * n - 1) / 2
    q = cs(tt)
    out = q[:, 0] + 1j * q[:, 1]
    out[::2] = g
    return out


def remesh(m: Mesh4D, target: Optional[float] = None, iterations: int = 6) -> Mesh4D:
    """Improve triangle quality: long-edge splits, Delaunay flips, tangential relaxation.

    Boundary vertices stay fixed.  New vertices are edge midpoints lifted by
    the average normal offset of the adjacent patch (second order).
    """
    V = m.vertices.copy()
    F = m.faces.copy()
    bnd = m.boundary.copy()
    if target is None:
        target = float(np.median(np.linalg.norm(V[F[:, 1]] - V[F[:, 0]], axis=1)))
    for _ in range(iterations):
        V, F, bnd = _split_long(V, F, bnd, 1.4 * target)
        F = _delaunay_flips(V, F)
        V = _tangential_relax(V, F, bnd)
        F = _delaunay_flips(V, F)
    return Mesh4D(V, F, bnd, m.graded_hint, m.theta_ref)


def _edge_faces(F):
    e = {}
    for fi, f in enumerate(F):
        for k in range(3):
            a, b = f[k], f[(k + 1) % 3]
            e.setdefault((min(a, b), max(a, b)), []).append(fi)
    return e


def _split_long(V, F, bnd, Lmax):
    e = np.unique(np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), 1), axis=0)
    L = np.linalg.norm(V[e[:, 0]] - V[e[:, 1]], axis=1)
    long = e[L > Lmax]
    if len(long) == 0:
        return V, F, bnd
    # split each face by its longest marked edge only (one split per face per pass)
    marked = {(int(a), int(b)) for a, b in long}
    newV = list(V)
    newb = list(bnd)
    mid = {}
    F2 = []
    used = set()
    ef = _edge_faces(F)
    for key in sorted(marked, key=lambda k: -np.linalg.norm(V[k[0]] - V[k[1]])):
        fs = ef[key]
        if any(fi in used for fi in fs):
            continue
        a, b = key
        mpt = 0.5 * (V[a] + V[b])
        mid[key] = len(newV)
        newV.append(mpt)
        newb.append(bool(bnd[a] and bnd[b] and len(fs) == 1))
        for fi in fs:
            used.add(fi)
            f = list(F[fi])
            k = [i for i in range(3) if {f[i], f[(i + 1) % 3]} == {a, b}][0]
            p, q, r = f[k], f[(k + 1) % 3], f[(k + 2) % 3]
            F2 += [(p, mid[key], r), (mid[key], q, r)]
    F2 += [tuple(F[i]) for i in range(len(F)) if i not in used]
    return np.array(newV), np.array(F2), np.array(newb)


def _delaunay_flips(V, F, max_pass: int = 20):
    F = F.copy()
    for _ in range(max_pass):
        ef = _edge_faces(F)
        flipped = False
        touched = set()
        for (a, b), fs in ef.items():
            if len(fs) != 2 or fs[0] in touched or fs[1] in touched:
                continue
            f0, f1 = F[fs[0]], F[fs[1]]
            c = [v for v in f0 if v != a and v != b][0]
            d = [v for v in f1 if v != a and v != b][0]
            ang_c = _angle(V[a] - V[c], V[b] - V[c])
            ang_d = _angle(V[a] - V[d], V[b] - V[d])
            if ang_c + ang_d > np.pi + 1e-9:
                # keep orientation: f0 contains (a, b) in some cyclic order
                k = list(f0).index(a)
                if f0[(k + 1) % 3] == b:
                    F[fs[0]] = (a, d, c)
                    F[fs[1]] = (d, b, c)
                else:
                    F[fs[0]] = (b, d, c)
                    F[fs[1]] = (d, a, c)
                touched.update(fs)
                flipped = True
        if not flipped:
            break
    return F


def _angle(a, b):
    return float(np.arccos(np.clip(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), -1, 1)))


def _tangential_relax(V, F, bnd, weight: float = 0.5):
    n = len(V)
    nbr_sum = np.zeros_like(V)
    cnt = np.zeros(n)
    e = np.unique(np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), 1), axis=0)
    for a, b in ((0, 1), (1, 0)):
        np.add.at(nbr_sum, e[:, a], V[e[:, b]])
        np.add.at(cnt, e[:, a], 1)
    d = nbr_sum / np.maximum(cnt, 1)[:, None] - V
    fr = _embed_mesh(Mesh4D(V, F, bnd)).frames
    dt = np.einsum("nik,ni->nk", fr, d)
    d_tan = np.einsum("nik,nk->ni", fr, dt)
    d_tan[bnd] = 0
    return V + weight * d_tan


def hausdorff_to_samples(A: np.ndarray, B: np.ndarray) -> float:
    """Symmetric point-cloud Hausdorff distance."""
    ta, tb = cKDTree(A), cKDTree(B)
    return float(max(tb.query(A)[0].max(), ta.query(B)[0].max()))


# ---------------------------------------------------------------- graphicality

@dataclass
class GraphData:
    """Graph of a 1-form over a pair on an annulus.

    ``p[j]`` plane coordinates, ``u[j]`` 1-form values (plane coordinates),
    ``du[j]`` slope matrices, for the samples over plane ``j`` (0 or 1).
    """

    p: list
    u: list
    du: list
    sup_u: float
    sup_du: float
    sup_u_over_r: float


def graph_decomposition(samples: SampleSet, V: PlanePair, r_in: float, r_out: float):
    """Split annulus samples by nearest plane and compute graph data (no checks)."""
    r = np.linalg.norm(samples.x, axis=1)
    sel = (r >= r_in) & (r <= r_out)
    x = samples.x[sel]
    fr = samples.frames[sel]
    d1 = V.p1.dist(x)
    d2 = V.p2.dist(x)
    out = []
    for j, P in enumerate((V.p1, V.p2)):
        m = (d1 <= d2) if j == 0 else (d2 < d1)
        E = P.frame
        JE = J_STD @ E
        xx = x[m]
        p = xx @ E
        n = xx - p @ E.T
        u = n @ JE  # normal = J E u
        A = np.einsum("ik,nil->nkl", E, fr[m])
        B = np.einsum("ik,nil->nkl", JE, fr[m])
        detA = np.linalg.det(A)
        good = np.abs(detA) > 1e-8
        du = np.full(A.shape, np.inf)
        du[good] = B[good] @ np.linalg.inv(A[good])
        out.append((p, u, du, detA))
    return out


def graphicality_detect(samples: SampleSet, V: PlanePair, r_in: float, r_out: float,
                        c1: float = geom.C1_DEFAULT, scale_invariant: bool = False,
                        n_sectors: int = 8):
    """Good-graphicality test on the annulus ``r_in <= |x| <= r_out``.

    Returns ``(GraphData, sup|u|, sup|grad u|)`` when the samples form a
    single-sheeted graph over each plane, cover the annulus on each plane and
    satisfy the norm bounds (``|u| <= c1`` and ``|grad u| <= c1``; with
    ``scale_invariant`` the first bound is ``|u|/|x| <= c1``); otherwise None.
    """
    if not (0 < r_in < r_out):
        raise ValueError("need 0 < r_in < r_out")
    parts = graph_decomposition(samples, V, r_in, r_out)
    ps, us, dus = [], [], []
    sup_u = sup_du = sup_ur = 0.0
    for p, u, du, detA in parts:
        if len(p) < n_sectors * 2:
            return None
        rho = np.linalg.norm(p, axis=1)
        # coverage: every (angular sector, radial band) of the plane annulus has samples
        ang = np.floor((np.arctan2(p[:, 1], p[:, 0]) + np.pi) / (2 * np.pi) * n_sectors).astype(int) % n_sectors
        rb = np.clip(np.floor((rho - r_in) / (r_out - r_in) * 2).astype(int), 0, 1)
        cells = set(zip(ang.tolist(), rb.tolist()))
        if len(cells) < 2 * n_sectors:
            return None
        if np.any(~np.isfinite(du)) or np.any(detA <= 0):
            return None
        nu = np.linalg.norm(u, axis=1)
        ndu = np.linalg.norm(du, ord=2, axis=(1, 2))
        # single sheet: nearby projections must carry nearby values
        tree = cKDTree(p)
        hloc = max(samples.h, 1e-12) if np.isfinite(samples.h) else 1e-3
        pairs = tree.query_pairs(r=0.5 * hloc, output_type="ndarray")
        if len(pairs):
            jump = np.linalg.norm(u[pairs[:, 0]] - u[pairs[:, 1]], axis=1)
            dist = np.linalg.norm(p[pairs[:, 0]] - p[pairs[:, 1]], axis=1)
            if np.any(jump > 2 * max(ndu.max(), c1) * dist + 1e-9 + 0.1 * hloc):
                return None
        sup_u = max(sup_u, float(nu.max()))
        sup_ur = max(sup_ur, float((nu / np.maximum(rho, 1e-300)).max()))
        sup_du = max(sup_du, float(ndu.max()))
        ps.append(p)
        us.append(u)
        dus.append(du)
    first = sup_ur if scale_invariant else sup_u
    if first > c1 or sup_du > c1:
        return None
    return GraphData(ps, us, dus, sup_u, sup_du, sup_ur), sup_u, sup_du


# ---------------------------------------------------------------- OFF with 4 coordinates

def write_off4(m: Mesh4D, path) -> None:
    """Write a mesh in the n-dimensional OFF dialect (header ``nOFF``, dimension 4)."""
    with open(path, "w") as fh:
        fh.write("nOFF\n4\n")
        fh.write(f"{len(m.vertices)} {len(m.faces)} 0\n")
        for v in m.vertices:
            fh.write(" ".join(repr(float(c)) for c in v) + "\n")
        for f in m.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def read_off4(path) -> Mesh4D:
    with open(path) as fh:
        toks = [ln.split("#")[0].strip() for ln in fh]
    toks = [t for t in toks if t]
    if toks[0] != "nOFF" or toks[1] != "4":
        raise DegenerateGrid("expected an nOFF file with dimension 4")
    nv, nf = (int(a) for a in toks[2].split()[:2])
    V = np.array([[float(c) for c in toks[3 + i].split()] for i in range(nv)])
    F = np.array([[int(c) for c in toks[3 + nv + i].split()[1:4]] for i in range(nf)])
    # boundary: vertices on edges with a single face
    e = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), 1)
    u, cnt = np.unique(e, axis=0, return_counts=True)
    bnd = np.zeros(nv, bool)
    bnd[u[cnt == 1].ravel()] = True
    return Mesh4D(V, F, bnd)
