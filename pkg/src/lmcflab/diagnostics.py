"""Functionals and detectors on time slices.

Excess, Gaussian distances to plane pairs, the ``|zw|`` gauge, the
graphicality radius, Liouville primitives and loop integrals, best-fit
special pairs, multi-scale closeness scans and Lawlor neck fits.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from . import geom
from . import surface as sf
from .errors import (DisconnectedRegion, DomainError, IllConditioned, NoImprovement,
                     NotCloseAtUnitScale, NotSpecial)
from .gaussquad import _fsum, gaussian_integral, tail_bound
from .geom import NeckCoordinates, PlanePair
from .surface import SampleSet

# area-ratio constant used for truncated surfaces near a pair of planes
C1_AREA_DEFAULT = 2.5 * math.pi


def jsonable(obj):
    """Recursively replace non-finite floats by the strings "inf", "-inf", "nan"."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, PlanePair):
        return obj.to_dict()
    return obj


def dumps(report) -> str:
    d = report.to_dict() if hasattr(report, "to_dict") else report
    return json.dumps(jsonable(d), indent=1)


def _raw_plane_gauss(radius: float) -> float:
    # int over a disc of radius R in a plane of exp(-|x|^2/4)
    if not np.isfinite(radius):
        return 4 * math.pi
    return 4 * math.pi * (1 - math.exp(-radius * radius / 4))


# ---------------------------------------------------------------- excess

@dataclass
class ExcessReport:
    """Gaussian excess over two planes.

    ``A = int e^{-|x|^2/4} - 2 int_{R^2} e^{-|x|^2/4} + min_theta0 int |theta - theta0|^2 e^{-|x|^2/4}``
    with the minimiser ``theta0_star`` the weighted mean.  When the samples
    are truncated at radius R the plane reference is truncated at the same R
    and the omitted part is reported in ``tail_bound``.
    """

    gaussian_area: float
    plane_pair_reference: float
    theta_l2_term: float
    theta0_star: float
    A: float
    alpha: float
    A_alpha: float
    tail_bound: float
    quad_error: float
    radius: float
    graded: bool = True

    def to_dict(self):
        return asdict(self)


def excess(samples: SampleSet, alpha: float = 0.1, C1: Optional[float] = C1_AREA_DEFAULT,
           R: Optional[float] = None) -> ExcessReport:
    """Excess ``A`` and ``A_alpha = |A|^(alpha-1) A``.

    For ungraded samples the angle term is undefined and ``A`` is NaN.
    """
    area = gaussian_integral(samples, None, C1=C1, R=R)
    ref = 2 * _raw_plane_gauss(area.radius)
    d2 = np.sum(samples.x ** 2, axis=1)
    mask = d2 <= area.radius ** 2 if np.isfinite(area.radius) else np.ones(len(d2), bool)
    w = np.exp(-d2[mask] / 4) * samples.dA[mask]
    W = _fsum(w)
    if samples.graded:
        th = samples.theta[mask]
        th0 = _fsum(w * th) / W
        l2 = _fsum(w * (th - th0) ** 2)
        osc = float(np.max(np.abs(th - th0))) if len(th) else 0.0
    else:
        th0, l2, osc = math.nan, math.nan, 0.0
    tb = area.tail_bound
    if np.isfinite(area.radius) and C1 is not None:
        # reference tail is exact; bound the angle term by its sampled sup
        tb += 2 * 4 * math.pi * math.exp(-area.radius ** 2 / 4)
        tb += tail_bound(area.radius, 1.0, C1, 0.0, osc ** 2)
    A = area.value - ref + l2
    Aa = math.copysign(abs(A) ** alpha, A) if A != 0 and np.isfinite(A) else (0.0 if A == 0 else A)
    return ExcessReport(area.value, ref, l2, th0, A, alpha, Aa, tb, area.quad_error,
                        area.radius, samples.graded)


# ---------------------------------------------------------------- distances

def dV_field(samples: SampleSet, V: PlanePair) -> np.ndarray:
    return np.asarray(V.dist(samples.x), dtype=float)


def dist_IV(samples: SampleSet, V: PlanePair, C1: Optional[float] = C1_AREA_DEFAULT,
            R: Optional[float] = None, return_result: bool = False):
    """Gaussian L2 distance ``I_V^2 = int (|x|^2 d_V^2 + |theta - theta_V|^2) e^{-|x|^2/4}``."""
    if not V.special:
        raise NotSpecial("I_V needs a special pair")
    thV = V.theta_V
    d = dV_field(samples, V)
    r2 = np.sum(samples.x ** 2, axis=1)
    dth = geom.wrap_angle(samples.theta - thV)
    f = r2 * d * d + dth * dth
    res = gaussian_integral(samples, f, C1=C1, R=R, degree=4,
                            growth=float(np.max(f / (1 + np.sqrt(r2)) ** 4)) if len(f) else 0.0)
    I = math.sqrt(max(res.value, 0.0))
    return (I, res) if return_result else I


@dataclass
class DistanceReport:
    V: PlanePair
    I_V: float
    graphical: bool
    sup_u: float
    sup_du: float
    D_V: float
    dV_max: float
    dV_mean: float
    zw_max: float
    zw_min: float
    c1: float

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "V"}
        d["V"] = self.V.to_dict()
        return d


def dist_DV(samples: SampleSet, V: PlanePair, c1: float = geom.C1_DEFAULT,
            C1: Optional[float] = C1_AREA_DEFAULT, R: Optional[float] = None,
            report: bool = False):
    """``D_V = I_V`` if the surface is a ``c1``-small graph over V on ``B_2 \\ B_1``, else inf."""
    I = dist_IV(samples, V, C1, R)
    g = sf.graphicality_detect(samples, V, 1.0, 2.0, c1)
    D = I if g is not None else math.inf
    if not report:
        return D
    d = dV_field(samples, V)
    nc = geom.neck_coordinates(V)
    zw = np.abs(nc.zw(samples.x))
    return DistanceReport(V, I, g is not None, g[1] if g else math.inf, g[2] if g else math.inf,
                          D, float(d.max()), float(d.mean()), float(zw.max()), float(zw.min()), c1)


@dataclass
class ZWField:
    zw: np.ndarray
    ratio: np.ndarray
    ratio_min: float
    ratio_max: float
    identity_error: float


def zw_field(samples_or_x, nc: NeckCoordinates, V: Optional[PlanePair] = None,
             min_r: float = 1e-12) -> ZWField:
    """Per-sample ``|zw|``, ratio ``|zw| / (|x| d_V)`` and the min-max identity residual."""
    x = samples_or_x.x if isinstance(samples_or_x, SampleSet) else np.atleast_2d(samples_or_x)
    V = nc.V if V is None else V
    zc = x @ nc.cz
    wc = x @ nc.cw
    az, aw = np.abs(zc), np.abs(wc)
    zw = np.abs(zc * wc)
    ident = np.abs(np.minimum(az, aw) * np.maximum(az, aw) - zw)
    r = np.linalg.norm(x, axis=1)
    d = V.dist(x)
    ok = (r > min_r) & (d > min_r * max(1.0, float(r.max(initial=1.0))))
    ratio = np.full(len(x), np.nan)
    ratio[ok] = zw[ok] / (r[ok] * d[ok])
    rr = ratio[ok]
    return ZWField(zw, ratio, float(rr.min()) if len(rr) else math.nan,
                   float(rr.max()) if len(rr) else math.nan,
                   float(ident.max(initial=0.0) / max(1.0, float(zw.max(initial=0.0)))))


def graphicality_radius(d: float, p0: float) -> float:
    """Radius ``R_d`` with ``d^2 exp(R_d^2 / 4 p0) = 1``."""
    if not (0 < d <= 1) or not (p0 > 1):
        raise DomainError(f"need 0 < d <= 1 and p0 > 1, got d={d}, p0={p0}")
    return math.sqrt(4 * p0 * math.log(1 / (d * d)))


# ---------------------------------------------------------------- Liouville primitive

def loop_integral(points: np.ndarray, method: str = "spectral") -> float:
    """Integral of the Liouville form around a closed loop given by samples.

    ``method='polygon'`` integrates exactly along straight segments.
    ``method='spectral'`` treats the samples as an equispaced periodic
    band-limited curve and integrates its trigonometric interpolant exactly.
    """
    P = np.asarray(points, dtype=float)
    if method == "polygon":
        Q = np.roll(P, -1, 0)
        return _fsum(np.einsum("ni,ij,nj->n", P, geom.J_STD.T, Q))
    n = len(P)
    C = np.fft.fft(P, axis=0) / n
    k = np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0  # Nyquist mode has no well-defined derivative
    dC = 1j * k[:, None] * C
    # int_0^{2pi} <J x, x'> dt = 2 pi sum_k Re <J c_k, conj(dc_k)>
    JC = C @ geom.J_STD.T
    return float(2 * math.pi * np.real(np.sum(JC * np.conj(dC))))


@dataclass
class LiouvilleResult:
    beta: np.ndarray
    loops: dict
    cycle_residual: float
    gradient_error: float
    exact: bool
    rational: Optional[bool] = None

    def to_dict(self):
        return {"loops": self.loops, "cycle_residual": self.cycle_residual,
                "gradient_error": self.gradient_error, "exact": self.exact,
                "rational": self.rational}


def _tree_primitive(X: np.ndarray, edges: np.ndarray, root: int = 0):
    n = len(X)
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    beta = np.full(n, np.nan)
    beta[root] = 0.0
    dq = deque([root])
    tree = set()
    while dq:
        a = dq.popleft()
        for b in adj[a]:
            if np.isnan(beta[b]):
                beta[b] = beta[a] + geom.segment_liouville(X[a], X[b])
                tree.add((min(a, b), max(a, b)))
                dq.append(b)
    if np.any(np.isnan(beta)):
        raise DisconnectedRegion("mesh region is not connected")
    res = 0.0
    for a, b in edges:
        if (min(a, b), max(a, b)) not in tree:
            res = max(res, abs(beta[a] + geom.segment_liouville(X[a], X[b]) - beta[b]))
    return beta, res


def state_loops(state) -> dict:
    """Generator loops (sampled, equispaced) of the first homology of a state."""
    if isinstance(state, sf.CurveProduct):
        out = {}
        for name, g, c, other in (("factor1", state.gamma1, state.closed1, state.gamma2[0]),
                                  ("factor2", state.gamma2, state.closed2, state.gamma1[0])):
            if c:
                pts = np.zeros((len(g), 4))
                if name == "factor1":
                    pts[:, 0], pts[:, 1] = g.real, g.imag
                    pts[:, 2], pts[:, 3] = other.real, other.imag
                else:
                    pts[:, 0], pts[:, 1] = other.real, other.imag
                    pts[:, 2], pts[:, 3] = g.real, g.imag
                out[name] = pts
        return out
    if isinstance(state, sf.EquivariantProfile):
        k = int(np.argmin(np.abs(state.gamma)))
        q = state.gamma[k]
        a = 2 * np.pi * np.arange(128) / 128
        return {"core": np.stack([(q * np.cos(a)).real, (q * np.cos(a)).imag,
                                  (q * np.sin(a)).real, (q * np.sin(a)).imag], 1)}
    if isinstance(state, sf.TwoChartGraph):
        g = state.chart1
        X = g.positions()
        return {"core": X[len(g.u) // 2]}
    if isinstance(state, sf.PotentialGraph) and state.kind == "polar":
        return {"core": state.positions()[len(state.u) // 2]}
    return {}


def lawlor_core_loop(V: PlanePair, eps: complex, n: int = 128) -> np.ndarray:
    nc = geom.neck_coordinates(V)
    z = math.sqrt(abs(eps)) * np.exp(2j * np.pi * np.arange(n) / n)
    return nc.point(z, eps / z)


def liouville_primitive(state, loops: Optional[dict] = None, tol: float = 1e-8,
                        discreteness: Optional[float] = None) -> LiouvilleResult:
    """Primitive ``beta`` of the Liouville form and loop integrals over generators.

    Meshes integrate along a breadth-first spanning tree of edges; potential
    graphs use the closed form ``beta = p . grad f - 2 f`` (graph coordinates);
    curve products and profiles integrate along the factor curves.  The
    exactness verdict is that every generator loop integral is below ``tol``;
    with ``discreteness = a`` the rationality verdict asks each loop integral to
    lie in ``a Z`` within ``tol``.
    """
    loops = state_loops(state) if loops is None else loops
    vals = {k: loop_integral(v, "spectral") for k, v in loops.items()}
    beta = np.zeros(0)
    cyc = 0.0
    gerr = 0.0
    if isinstance(state, sf.Mesh4D):
        beta, cyc = _tree_primitive(state.vertices, state.edges())
        gerr = _mesh_gradient_error(state, beta)
    elif isinstance(state, sf.PotentialGraph):
        grad, _ = state.derivatives()
        p = state.plane_points()
        beta = np.sum(p * np.moveaxis(grad, 0, -1), -1) - 2 * state.f
    elif isinstance(state, sf.EquivariantProfile):
        beta = profile_primitive(state.gamma)
    exact = all(abs(v) <= tol for v in vals.values())
    rational = None
    if discreteness is not None:
        rational = all(abs(v / discreteness - round(v / discreteness)) * discreteness <= tol
                       for v in vals.values())
    return LiouvilleResult(beta, vals, cyc, gerr, exact, rational)


def _mesh_gradient_error(m: sf.Mesh4D, beta: np.ndarray) -> float:
    # compare the per-face gradient of beta with the tangential part of J x
    V, F = m.vertices, m.faces
    e1 = V[F[:, 1]] - V[F[:, 0]]
    e2 = V[F[:, 2]] - V[F[:, 0]]
    c = V[F].mean(axis=1)
    Jc = c @ geom.J_STD.T
    G = np.stack([e1, e2], -1)
    g = np.einsum("nia,nib->nab", G, G)
    db = np.stack([beta[F[:, 1]] - beta[F[:, 0]], beta[F[:, 2]] - beta[F[:, 0]]], -1)
    rhs = np.einsum("nia,ni->na", G, Jc)
    err = np.linalg.solve(g, (db - rhs)[..., None])[..., 0]
    grad_err = np.einsum("nia,na->ni", G, err)
    return float(np.max(np.linalg.norm(grad_err, axis=1)))


def profile_primitive(g: np.ndarray) -> np.ndarray:
    """Liouville primitive along a profile, zero at the first node.

    On ``gamma (cos a, sin a)`` the Liouville form pairs to zero with the
    rotation direction, so the primitive is a function of the profile
    parameter; segments are integrated exactly.
    """
    seg = g[:-1].real * g[1:].imag - g[:-1].imag * g[1:].real
    return np.concatenate([[0.0], np.cumsum(seg)])


def profile_laplacian(g: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Laplace-Beltrami of an invariant function on the SO(2)-surface of a profile.

    Metric ``ds^2 + |gamma|^2 da^2``: ``Delta f = f_ss + (|gamma|_s / |gamma|) f_s``.
    """
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(g)))])
    h1 = s[1:-1] - s[:-2]
    h2 = s[2:] - s[1:-1]
    fm, f0, fp = f[:-2], f[1:-1], f[2:]
    fs = (h1 ** 2 * fp - h2 ** 2 * fm + (h2 ** 2 - h1 ** 2) * f0) / (h1 * h2 * (h1 + h2))
    fss = 2 * (h1 * fp - (h1 + h2) * f0 + h2 * fm) / (h1 * h2 * (h1 + h2))
    a = np.abs(g)
    am, a0, ap = a[:-2], a[1:-1], a[2:]
    as_ = (h1 ** 2 * ap - h2 ** 2 * am + (h2 ** 2 - h1 ** 2) * a0) / (h1 * h2 * (h1 + h2))
    out = np.full(len(f), np.nan)
    out[1:-1] = fss + as_ / a0 * fs
    return out


def liouville_heat_residual(p: sf.EquivariantProfile, t: float, dt: float, sign: float = 1.0,
                            interior: float = 0.2):
    """Heat residual of ``beta + sign 2 t theta`` along the flow of a profile.

    Takes one pure normal-motion step (no resampling), so node indices are
    material points; returns ``max |(d/dt - Delta) F| / max |Delta F|`` over
    the middle ``1 - 2 interior`` fraction of nodes and the raw residual.
    """
    from .flow import step_profile
    g0 = p.gamma
    q = step_profile(p, dt, cfl=0.5)
    g1 = q.gamma
    b0, b1 = profile_primitive(g0), profile_primitive(g1)
    th0, th1 = p.theta(), q.theta()
    F0 = b0 + sign * 2 * t * th0
    F1 = b1 + sign * 2 * (t + dt) * th1
    gm = 0.5 * (g0 + g1)
    Fm = 0.5 * (F0 + F1)
    lap = profile_laplacian(gm, Fm)
    res = (F1 - F0) / dt - lap
    n = len(g0)
    sl = slice(int(interior * n), int((1 - interior) * n))
    raw = float(np.nanmax(np.abs(res[sl])))
    scale = float(np.nanmax(np.abs(lap[sl])))
    return raw / max(scale, 1e-300), raw


# ---------------------------------------------------------------- best-fit pair

@dataclass
class PairFit:
    V: PlanePair
    I: float
    I_seed: float
    params: np.ndarray
    distance: float
    improved: bool
    nfev: int


def best_fit_pair(samples: SampleSet, seed: PlanePair, C1: Optional[float] = C1_AREA_DEFAULT,
                  R: Optional[float] = None, xatol: float = 1e-9, fatol: float = 1e-14,
                  maxiter: int = 4000, strict: bool = False) -> PairFit:
    """Minimise ``I_V^2`` over the five-parameter special-pair chart around ``seed``.

    Nelder-Mead with restarts from the current optimum.  Returns the seed
    when no improvement is found (or raises :class:`NoImprovement` if ``strict``).
    """
    if not seed.special:
        raise NotSpecial("seed pair must be special")
    if R is not None or np.isfinite(samples.extent):
        lim = samples.extent if R is None else min(R, samples.extent)
        keep = np.sum(samples.x ** 2, axis=1) <= lim * lim
        sub = samples.subset(keep)
        sub.extent = lim
    else:
        sub = samples
    d2 = np.sum(sub.x ** 2, axis=1)
    w = np.exp(-d2 / 4) * sub.dA
    x, th = sub.x, sub.theta

    def obj(p):
        V = geom.special_pair(p, seed)
        d = np.asarray(V.dist(x))
        dth = geom.wrap_angle(th - V.theta_V)
        return float(np.dot(w, d2 * d * d + dth * dth))

    f0 = obj(np.zeros(5))
    p = np.zeros(5)
    best = f0
    nfev = 1
    step = 0.05
    for _ in range(4):
        simplex = np.vstack([p] + [p + step * e for e in np.eye(5)])
        r = optimize.minimize(obj, p, method="Nelder-Mead",
                              options={"xatol": xatol, "fatol": fatol, "maxiter": maxiter,
                                       "initial_simplex": simplex})
        nfev += r.nfev
        if r.fun < best - 1e-15:
            gain = best - r.fun
            best, p = float(r.fun), r.x
            step = max(step * 0.2, 1e-6)
            if gain < 1e-14:
                break
        else:
            break
    if best >= f0:
        if strict:
            raise NoImprovement("no improvement over the seed")
        return PairFit(seed, math.sqrt(max(f0, 0)), math.sqrt(max(f0, 0)), np.zeros(5), 0.0, False, nfev)
    V = geom.special_pair(p, seed)
    return PairFit(V, math.sqrt(max(best, 0)), math.sqrt(max(f0, 0)), p,
                   geom.pair_distance(seed, V), True, nfev)


# ---------------------------------------------------------------- Lawlor fit

@dataclass
class NeckReport:
    t: float
    center: np.ndarray
    r: float
    eps: complex
    sign: int
    residual: float
    n_samples: int
    lambda_min: float = math.nan
    lambda_max: float = math.nan

    def to_dict(self):
        return {"t": self.t, "center": list(map(float, self.center)), "r": self.r,
                "eps": {"re": self.eps.real, "im": self.eps.imag}, "sign": self.sign,
                "residual": self.residual, "n_samples": self.n_samples,
                "lambda_min": self.lambda_min, "lambda_max": self.lambda_max}


def lawlor_fit(samples_or_x, V: PlanePair, center=None, radius: Optional[float] = None,
               n_sectors: int = 8, t: float = math.nan) -> NeckReport:
    """Least-squares ``eps`` for ``zw = eps`` on samples near the neck.

    ``eps`` is the mean of ``z w`` over samples with ``|x - x0| <= radius``
    (default ``3 r`` with ``r`` the distance from ``x0`` to the closest
    sample); ``residual = RMS(zw - eps) / |eps|``.  With the phase
    normalisation of :func:`geom.neck_coordinates` real ``eps`` gives exact
    necks, and the Lawlor sign is ``sign(Re eps)``.
    """
    x = samples_or_x.x if isinstance(samples_or_x, SampleSet) else np.atleast_2d(samples_or_x)
    c = np.zeros(4) if center is None else np.asarray(center, dtype=float)
    y = x - c
    d = np.linalg.norm(y, axis=1)
    r = float(d.min())
    rad = 3 * r if radius is None else radius
    sel = d <= rad
    nc = geom.neck_coordinates(V)
    zc = y[sel] @ nc.cz
    wc = y[sel] @ nc.cw
    ang = np.floor((np.angle(np.where(np.abs(zc) >= np.abs(wc), zc, np.conj(wc))) + np.pi)
                   / (2 * np.pi) * n_sectors).astype(int) % n_sectors
    if len(set(ang.tolist())) < 3:
        raise IllConditioned("neck samples span fewer than 3 angular sectors")
    zw = zc * wc
    eps = complex(np.mean(zw))
    res = float(np.sqrt(np.mean(np.abs(zw - eps) ** 2)) / max(abs(eps), 1e-300))
    sign = 1 if eps.real >= 0 else -1
    return NeckReport(t, c, r, eps, sign, res, int(sel.sum()))


# ---------------------------------------------------------------- multi-scale scan

@dataclass
class ScaleScan:
    lambdas: np.ndarray
    close: np.ndarray
    pairs: list
    sup_u: np.ndarray
    sup_du: np.ndarray
    lambda_min: float
    lambda_max: float

    def to_dict(self):
        return {"lambdas": self.lambdas, "close": self.close, "sup_u": self.sup_u,
                "sup_du": self.sup_du, "lambda_min": self.lambda_min,
                "lambda_max": self.lambda_max,
                "pairs": [None if p is None else p.to_dict() for p in self.pairs]}


def close_at_scale(samples_list: Sequence[SampleSet], seed: PlanePair, eps_close: float,
                   r_in: float, r_out: float, c1: float = geom.C1_DEFAULT, fit: bool = True):
    """epsilon-closeness of rescaled slices to a single fitted pair.

    Every slice must be a graph over the pair on ``r_in <= |x| <= r_out`` with
    ``sup |u|/|x| <= eps_close`` and ``sup |grad u| <= eps_close``; the pair is
    fitted to the last slice and must stay in the admissible family.
    """
    V = seed
    if fit:
        try:
            V = best_fit_pair(samples_list[-1], seed, R=min(r_out, samples_list[-1].extent)).V
        except NotSpecial:
            V = seed
    if not V.in_family(c1, geom.C2_DEFAULT, ref=seed):
        return False, V, math.inf, math.inf
    su = sd = 0.0
    for s in samples_list:
        g = sf.graphicality_detect(s, V, r_in, r_out, eps_close, scale_invariant=True)
        if g is None:
            return False, V, math.inf, math.inf
        su, sd = max(su, g[0].sup_u_over_r), max(sd, g[2])
    return True, V, su, sd


def scale_scan(trace, X, eps_close: float = 0.05, seed: Optional[PlanePair] = None,
               lambdas: Optional[np.ndarray] = None, n_times: int = 3,
               c1: float = geom.C1_DEFAULT, raise_on_unit: bool = True) -> ScaleScan:
    """Scan ``lambda`` for closeness of ``D_{1/lambda}(M - X)`` to a pair.

    The spacetime block is ``(B_{1/eps} \\ B_eps) x [-1/eps^2, -eps^2]`` in
    rescaled units; it is intersected with the stored time range and the
    represented extent of the surface.  Up to ``n_times`` checkpoints inside
    the block are tested.
    """
    x0, t0 = X
    x0 = np.asarray(x0, dtype=float)
    seed = geom.canonical_pair() if seed is None else seed
    lambdas = 2.0 ** (np.arange(-24, 25) / 4) if lambdas is None else np.asarray(lambdas, float)
    times = np.asarray(trace.times)
    close, pairs, su, sd = [], [], [], []
    for lam in lambdas:
        t_lo, t_hi = t0 - lam * lam / eps_close ** 2, t0 - lam * lam * eps_close ** 2
        idx = np.nonzero((times >= t_lo - 1e-14) & (times <= t_hi + 1e-14))[0]
        if len(idx) == 0:
            k = int(np.searchsorted(times, t_hi, side="right")) - 1
            idx = np.array([k]) if k >= 0 else np.array([], int)
        if len(idx) == 0:
            close.append(False); pairs.append(None); su.append(math.inf); sd.append(math.inf)
            continue
        idx = idx[np.linspace(0, len(idx) - 1, min(n_times, len(idx))).round().astype(int)]
        slices = []
        for k in np.unique(idx):
            s = sf.embed(trace.checkpoints[k].state).scaled(1.0 / lam, x0)
            slices.append(s)
        ext = min(s.extent for s in slices)
        r_in, r_out = eps_close, min(1.0 / eps_close, 0.9 * ext)
        if r_out <= 2 * r_in:
            close.append(False); pairs.append(None); su.append(math.inf); sd.append(math.inf)
            continue
        ok, V, a, b = close_at_scale(slices, seed, eps_close, r_in, r_out, c1)
        close.append(ok); pairs.append(V if ok else None); su.append(a); sd.append(b)
    close = np.array(close)
    i1 = int(np.argmin(np.abs(np.log(lambdas))))
    if not close[i1]:
        if raise_on_unit:
            raise NotCloseAtUnitScale("flow is not eps-close at unit scale")
        return ScaleScan(lambdas, close, pairs, np.array(su), np.array(sd), math.nan, math.nan)
    lo = hi = i1
    while lo > 0 and close[lo - 1]:
        lo -= 1
    while hi < len(lambdas) - 1 and close[hi + 1]:
        hi += 1
    return ScaleScan(lambdas, close, pairs, np.array(su), np.array(sd),
                     float(lambdas[lo]), float(lambdas[hi]))


def pair_drift_sum(pairs: Sequence[PlanePair]) -> float:
    """Sum of pair distances between consecutive fitted pairs (None skipped)."""
    P = [p for p in pairs if p is not None]
    return float(sum(geom.pair_distance(a, b) for a, b in zip(P[:-1], P[1:])))


# ---------------------------------------------------------------- angle obstruction

def theta_oscillation(samples: SampleSet, r_in: float = 0.5, r_out: float = 2.0) -> float:
    """Oscillation ``max theta - min theta`` on the annulus (graded samples)."""
    r = np.linalg.norm(samples.x, axis=1)
    sel = (r >= r_in) & (r <= r_out)
    th = samples.theta[sel]
    return float(th.max() - th.min()) if len(th) else math.nan
