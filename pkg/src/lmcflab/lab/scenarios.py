"""Built-in scenarios S1-S7.

Each scenario bundles an initial-state recipe, default step control, the
diagnostic channels recorded at every checkpoint and a post-run summary.
All scenarios record the monitor channels

``huisken``, ``huisken_tol``
    Gaussian density at the spacetime point ``(x0, t0)`` and its tolerance.
``entropy``, ``entropy_tol``
    Maximum density over the fixed spacetime centres ``(x0, t0_j)``.
``excess``, ``excess_alpha``, ``excess_tol``
    Excess of the rescaled view about ``(x0, t0)``.
``h_eff``
    Local sample spacing in rescaled units.

Tolerances are ``tail bound + 10 h_eff^2``.  Channels are NaN once
``t >= t0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .. import diagnostics as dg
from .. import drift, geom
from .. import surface as sf
from ..errors import ConfigError, LabError
from ..flow import FlowTrace, StepControl, typical_spacing
from ..gaussquad import gaussian_integral

ENTROPY_RADII = tuple(float(r) for r in np.geomspace(0.25, 4.0, 9))


# ---------------------------------------------------------------- monitor channels

def state_spacing(state, x0=None, radius: float = math.inf) -> float:
    """Largest sample spacing within ``radius`` of ``x0`` (whole state if none there).

    Profiles use the spacing along the profile curve only; the angular
    trapezoid rule is spectrally accurate for kernels centred on the axis.
    """
    c = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float)
    if isinstance(state, sf.EquivariantProfile):
        g = state.gamma
        seg = np.abs(np.diff(g))
        mid = np.abs(0.5 * (g[1:] + g[:-1]))
        near = mid <= radius + np.linalg.norm(c)
        return float(seg[near].max() if near.any() else seg.max())
    if isinstance(state, sf.CurveProduct):
        return float(max(sf._seg(state.gamma1, state.closed1).max(),
                         sf._seg(state.gamma2, state.closed2).max()))
    if isinstance(state, sf.Mesh4D):
        e = state.edges()
        X = state.vertices
        mid = 0.5 * (X[e[:, 0]] + X[e[:, 1]])
        ln = np.linalg.norm(X[e[:, 0]] - X[e[:, 1]], axis=1)
        near = np.linalg.norm(mid - c, axis=1) <= radius
        return float(ln[near].max() if near.any() else np.median(ln))
    return float(state.h)


def _truncated(samples) -> bool:
    return bool(np.isfinite(samples.extent))


class Monitor:
    """Huisken, entropy and excess channels about a spacetime point.

    The channel functions share one evaluation per checkpoint.
    """

    names = ("huisken", "huisken_tol", "entropy", "entropy_tol", "excess", "excess_alpha",
             "excess_tol", "h_eff")

    def __init__(self, x0, t0: float, alpha: float = 0.1, C1: float = dg.C1_AREA_DEFAULT,
                 entropy_t0: Optional[List[float]] = None):
        self.x0 = np.asarray(x0, dtype=float)
        self.t0 = float(t0)
        self.alpha = float(alpha)
        self.C1 = float(C1)
        ts = [r * r for r in ENTROPY_RADII] + [self.t0]
        self.entropy_t0 = sorted(set(ts if entropy_t0 is None else entropy_t0))
        self._key = None
        self._val: Dict[str, float] = {}

    def evaluate(self, state, t: float) -> Dict[str, float]:
        key = (id(state), t)
        if key == self._key:
            return self._val
        out = dict.fromkeys(self.names, math.nan)
        s = sf.embed(state)
        C1 = self.C1 if _truncated(s) else None
        if t < self.t0:
            scale = math.sqrt(self.t0 - t)
            h = state_spacing(state, self.x0, 6 * scale) / scale
            S = s.scaled(1.0 / scale, self.x0)
            dens = gaussian_integral(S, None, C1=C1, normalized=True)
            ex = dg.excess(S, self.alpha, C1=C1 if C1 is not None else dg.C1_AREA_DEFAULT)
            out.update(huisken=dens.value, huisken_tol=dens.tail_bound + 10 * h * h,
                       excess=ex.A, excess_alpha=ex.A_alpha,
                       excess_tol=ex.tail_bound + 10 * h * h, h_eff=h)
        best, tol = -math.inf, math.nan
        for t0 in self.entropy_t0:
            if t0 <= t:
                continue
            scale = math.sqrt(t0 - t)
            h = state_spacing(state, self.x0, 6 * scale) / scale
            if h > 0.5:
                continue  # kernel not resolved; dropping a centre cannot raise the max
            r = gaussian_integral(s, None, self.x0, t0 - t, C1=C1, normalized=True)
            if r.value > best:
                best, tol = r.value, r.tail_bound + 10 * h * h
        if np.isfinite(best):
            out.update(entropy=best, entropy_tol=tol)
        self._key, self._val = key, out
        return out

    def channels(self) -> Dict[str, Callable]:
        return {n: (lambda s, t, n=n: self.evaluate(s, t)[n]) for n in self.names}


# ---------------------------------------------------------------- scenario type

@dataclass
class Scenario:
    name: str
    title: str
    doc: str
    params: dict
    control: dict
    monitor: dict
    build: Callable
    extra_channels: Callable = None
    summarize: Callable = None
    plots: tuple = ("huisken", "entropy", "excess")
    check: Callable = None

    def control_defaults(self) -> dict:
        base = StepControl().to_dict()
        base.update(self.control)
        return base

    def validate(self, params: dict, text: Optional[str] = None):
        if self.check is not None:
            self.check(params, text)

    def channels(self, cfg, initial) -> Dict[str, Callable]:
        m = cfg.monitor
        mon = Monitor(m["x0"], m["t0"], m["alpha"], m["C1"])
        ch = mon.channels()
        if self.extra_channels is not None:
            ch.update(self.extra_channels(cfg.params, initial))
        return ch


_REGISTRY: Dict[str, Scenario] = {}


def register(sc: Scenario) -> Scenario:
    _REGISTRY[sc.name] = sc
    return sc


def get_scenario(name: str) -> Scenario:
    key = name.upper()
    for k, v in _REGISTRY.items():
        if key == k or name.lower() == v.title:
            return v
    raise KeyError(name)


def list_scenarios() -> List[Scenario]:
    return [_REGISTRY[k] for k in sorted(_REGISTRY)]


def _monitor(t0: float) -> dict:
    return {"x0": [0.0, 0.0, 0.0, 0.0], "t0": float(t0), "alpha": 0.1, "C1": dg.C1_AREA_DEFAULT}


def _positive(params: dict, keys, text=None):
    from .config import _line_of

    for k in keys:
        if not params[k] > 0:
            raise ConfigError("must be positive", f"params.{k}", _line_of(text, k, "params"))


def _safe(fn, default=math.nan):
    try:
        return fn()
    except LabError:
        return default


# ---------------------------------------------------------------- S1 / S2 statics

def _displacement_channel(initial):
    X0 = initial.vertices.copy()
    return lambda s, t: float(np.max(np.linalg.norm(s.vertices - X0, axis=1)))


def _static_summary(trace: FlowTrace, params, initial):
    d = trace.channel("max_displacement")
    h = initial.h
    return {"max_displacement": float(np.nanmax(d)), "h": h,
            "displacement_over_h2": float(np.nanmax(d)) / h ** 2}, {}


register(Scenario(
    "S1", "static-plane",
    "Flat Lagrangian plane as a triangle mesh with fixed boundary; nothing moves.",
    {"extent": 6.0, "n": 61},
    {"t_max": 0.1, "checkpoint_dt": 0.02},
    _monitor(0.5),
    lambda p, rng: sf.plane_mesh(geom.real_plane(), p["extent"], p["n"]),
    lambda p, s0: {"max_displacement": _displacement_channel(s0)},
    _static_summary,
    ("huisken", "excess", "max_displacement"),
    lambda p, text=None: _positive(p, ["extent"], text),
))


def _lawlor_mesh(p, rng):
    return geom.lawlor_neck(geom.canonical_pair(), p["eps"], p["R"], p["n_phi"])


register(Scenario(
    "S2", "static-lawlor",
    "Lawlor neck {zw = eps} over the canonical pair as a mesh with fixed boundary.",
    {"eps": 0.2, "R": 3.0, "n_phi": 64},
    {"t_max": 0.1, "checkpoint_dt": 0.02},
    _monitor(0.2),
    _lawlor_mesh,
    lambda p, s0: {"max_displacement": _displacement_channel(s0),
                   "omega_defect": lambda s, t: float(s.omega_defect().max())},
    _static_summary,
    ("huisken", "excess", "max_displacement"),
    lambda p, text=None: _positive(p, ["R", "n_phi"], text),
))


# ---------------------------------------------------------------- S3 circle product

def _circle_radius(g):
    return math.sqrt(abs(sf.polygon_area(g)) / math.pi)


def _circles_summary(trace: FlowTrace, params, initial):
    r0 = params["radii"]
    t = trace.times
    worst = 0.0
    for i, name in enumerate(("r1", "r2")):
        r = trace.channel(name)
        ok = r >= 0.3
        exact = r0[i] ** 2 - 2 * t[ok]
        worst = max(worst, float(np.max(np.abs(r[ok] ** 2 - exact) / exact)))
    return {"pinch_time": trace.T_hat, "pinch_time_exact": min(r0) ** 2 / 2,
            "max_rel_err_r2": worst}, {}


register(Scenario(
    "S3", "circle-product",
    "Product of two round circles; each radius follows r^2 = r0^2 - 2t.",
    {"radii": [1.0, 1.0], "n": 128},
    {"t_max": 0.6, "checkpoint_dt": 0.01, "stop_gauge": 0.05},
    _monitor(0.5),
    lambda p, rng: sf.CurveProduct(sf.circle(p["radii"][0], p["n"]), sf.circle(p["radii"][1], p["n"])),
    lambda p, s0: {"r1": lambda s, t: _circle_radius(s.gamma1),
                   "r2": lambda s, t: _circle_radius(s.gamma2)},
    _circles_summary,
    ("huisken", "excess", "r1"),
    lambda p, text=None: _positive(p, ["n"], text),
))


# ---------------------------------------------------------------- S4 / S5 pinches

def _profile_channels(p, s0):
    V = geom.canonical_pair()

    def fit(s, t):
        return dg.lawlor_fit(sf.embed(s), V)

    cache = {}

    def get(s, t):
        k = (id(s), t)
        if k not in cache:
            cache.clear()
            cache[k] = _safe(lambda: fit(s, t), None)
        return cache[k]

    return {"rmin": lambda s, t: s.rmin,
            "lawlor_eps": lambda s, t: get(s, t).eps.real if get(s, t) else math.nan,
            "lawlor_residual": lambda s, t: get(s, t).residual if get(s, t) else math.nan}


def pinch_rows(trace: FlowTrace, x0=None, V: Optional[geom.PlanePair] = None,
               fit_pairs: bool = False, last_decades: float = 2.0) -> List[dict]:
    """Rescaled-view diagnostics at checkpoints approaching the singular time.

    Rows cover checkpoints with ``rmin <= 10**last_decades * rmin_final``.
    Each row holds the Lawlor fit, the excess and ``D_V`` of the rescaled
    view about ``(x0, T_hat)``; with ``fit_pairs`` the pair is refitted per row
    (seeded by the previous fit) and ``V`` is ignored for the fit.
    """
    T = trace.T_hat
    if T is None:
        raise LabError("trace has no singular-time estimate")
    V = geom.canonical_pair() if V is None else V
    c = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float)
    r_end = trace.checkpoints[-1].state.rmin
    rows = []
    seed = V
    for ck in trace.checkpoints:
        s = ck.state
        if not (s.rmin <= 10 ** last_decades * r_end) or ck.t >= T:
            continue
        lam = math.sqrt(T - ck.t)
        S = sf.embed(s).scaled(1.0 / lam, c)
        row = {"t": ck.t, "tau": -math.log(T - ck.t), "rmin": s.rmin,
               "h_neck": state_spacing(s, c, 3 * s.rmin)}
        Vr = V
        if fit_pairs:
            fitres = dg.best_fit_pair(S, seed, R=min(4.0, S.extent))
            Vr = seed = fitres.V
            row["pair_I"] = fitres.I
            row["pair_step"] = fitres.distance
            row["pair_theta"] = Vr.theta_V
            row["pair_dist_V0"] = geom.pair_distance(V, Vr)
        nr = _safe(lambda: dg.lawlor_fit(sf.embed(s), Vr, c), None)
        row["lawlor_eps"] = nr.eps.real if nr else math.nan
        row["lawlor_sign"] = nr.sign if nr else 0
        row["lawlor_residual"] = nr.residual if nr else math.nan
        ex = dg.excess(S)
        row["excess"], row["excess_alpha"] = ex.A, ex.A_alpha
        h = row["h_neck"] / lam
        row["excess_tol"] = ex.tail_bound + 10 * h * h
        row["D_V"] = dg.dist_DV(S, Vr)
        rows.append(row)
    return rows


def pinch_verdict(rows: List[dict], resid_tol: float = 0.05, n_last: int = 5) -> dict:
    """Phenomenological pinch checks over the final decade of ``rmin``."""
    r_end = rows[-1]["rmin"]
    dec = [r for r in rows if r["rmin"] <= 10 * r_end]
    signs = {r["lawlor_sign"] for r in dec}
    res = [r["lawlor_residual"] for r in rows[-n_last:]]
    D = np.array([r["D_V"] for r in dec])
    steps = np.diff(D)
    return {"rmin_final": r_end,
            "decade_rows": len(dec),
            "sign_constant": len(signs) == 1 and 0 not in signs,
            "sign": next(iter(signs)) if len(signs) == 1 else 0,
            "last_residuals": res,
            "residual_ok": bool(len(res) == n_last and max(res) <= resid_tol),
            "D_V_first": float(D[0]) if len(D) else math.nan,
            "D_V_last": float(D[-1]) if len(D) else math.nan,
            "D_V_max_increase": float(steps.max()) if len(steps) else 0.0,
            "D_V_nonincreasing": bool(len(D) > 1 and np.all(np.isfinite(D)) and np.all(steps <= 0))}


def _pinch_summary(trace: FlowTrace, params, initial):
    rows = pinch_rows(trace)
    out = {"pinch_time": trace.T_hat, "pinch_detected": trace.has_event("pinch-detected"),
           **pinch_verdict(rows)}
    return out, {"rescaled": rows}


def _sector(p, rng):
    return sf.sector_profile(p["eps0"], p["delta"], p["R"], p["n"])


_PINCH_CONTROL = {"t_max": 50.0, "checkpoint_dt": 0.5, "stop_gauge": 1e-3}

register(Scenario(
    "S4", "lawlor-pinch",
    "Equivariant neck in a sector wider than a right angle; the neck pinches "
    "at the origin with a Lawlor profile.",
    {"eps0": 0.5, "delta": 0.4, "R": 8.0, "n": 401},
    _PINCH_CONTROL,
    _monitor(2.5),
    _sector,
    _profile_channels,
    _pinch_summary,
    ("huisken", "excess", "rmin", "lawlor_residual"),
    lambda p, text=None: _positive(p, ["eps0", "delta", "R", "n"], text),
))


def _uniqueness_summary(trace: FlowTrace, params, initial):
    rows = pinch_rows(trace, fit_pairs=True)
    dec = [r for r in rows if r["rmin"] <= 10 * rows[-1]["rmin"]]
    steps = [r["pair_step"] for r in dec[1:]]
    out = {"pinch_time": trace.T_hat, **pinch_verdict(rows),
           "pair_theta_final": rows[-1]["pair_theta"],
           "pair_dist_V0_final": rows[-1]["pair_dist_V0"],
           "pair_drift_decade": float(sum(steps)),
           "pair_steps_decade": steps}
    if params["scan"]:
        T = trace.T_hat
        scan = dg.scale_scan(trace, (np.zeros(4), T), params["eps_close"],
                             raise_on_unit=False,
                             lambdas=2.0 ** (np.arange(-16, 5) / 2))
        out["lambda_min"], out["lambda_max"] = scan.lambda_min, scan.lambda_max
        out["scan_close"] = scan.close.tolist()
    return out, {"rescaled": rows}


register(Scenario(
    "S5", "uniqueness-probe",
    "Pinch from a neck with one arm rotated by a bump; rescaled views are "
    "fitted by the best special pair to probe uniqueness of the tangent pair.",
    {"eps0": 0.5, "delta": 0.4, "R": 8.0, "n": 201, "bump": 0.3, "bump_center": 2.0,
     "bump_width": 0.5, "scan": True, "eps_close": 0.1},
    {**_PINCH_CONTROL, "stop_gauge": 1e-2},
    _monitor(2.0),
    lambda p, rng: sf.bump_profile(_sector(p, rng), p["bump"], p["bump_center"], p["bump_width"]),
    _profile_channels,
    _uniqueness_summary,
    ("huisken", "excess", "rmin"),
    lambda p, text=None: _positive(p, ["eps0", "delta", "R", "n", "bump_width"], text),
))


# ---------------------------------------------------------------- S6 excess vs distance

def near_pair_potentials(rng: np.random.Generator, decay: float = 8.0):
    """Two random Gaussian-damped quadratic potentials (unit coefficient norm)."""
    c = rng.normal(size=(2, 6))
    c /= np.linalg.norm(c, axis=1, keepdims=True)

    def make(k):
        a = c[k]

        def f(x, y):
            poly = a[0] + a[1] * x + a[2] * y + a[3] * x * x + a[4] * x * y + a[5] * y * y
            return np.exp(-(x * x + y * y) / decay) * poly
        return f
    return make(0), make(1)


def near_pair_state(V: geom.PlanePair, delta: float, phis, extent: float, n: int) -> sf.TwoChartGraph:
    """Union of two potential graphs ``delta * phi_j`` over the planes of V."""
    f1, f2 = phis
    return sf.TwoChartGraph(V, sf.cartesian_graph(V.p1, lambda x, y: delta * f1(x, y), extent, n),
                            sf.cartesian_graph(V.p2, lambda x, y: delta * f2(x, y), extent, n))


def excess_distance_sweep(targets=(1e-3, 3e-3, 1e-2, 3e-2, 1e-1), seed: int = 0,
                          extent: float = 10.0, n: int = 201, alpha: float = 0.1):
    """Excess against ``D_V`` over a synthetic family of graphs near the canonical pair.

    The amplitude for each target distance is found by a secant iteration on
    the measured ``D_V``.  Returns rows with the measured ``d`` and ``A``.
    """
    V = geom.canonical_pair()
    phis = near_pair_potentials(np.random.default_rng(seed))

    def measure(delta):
        s = sf.embed(near_pair_state(V, delta, phis, extent, n))
        return dg.dist_DV(s, V), dg.excess(s, alpha)

    d_ref, _ = measure(1e-2)
    if not np.isfinite(d_ref) or d_ref <= 0:
        raise LabError("reference member is not graphical")
    rows = []
    for d in targets:
        delta = 1e-2 * d / d_ref
        for _ in range(3):
            dm, ex = measure(delta)
            if not np.isfinite(dm):
                break
            if abs(dm - d) <= 1e-3 * d:
                break
            delta *= d / dm
        rows.append({"target": d, "delta": delta, "d": dm, "A": ex.A, "A_alpha": ex.A_alpha,
                     "tail_bound": ex.tail_bound, "bound": dm ** (1 + alpha),
                     "ok": bool(abs(ex.A) <= dm ** (1 + alpha))})
    return rows


def sweep_slope(rows) -> float:
    d = np.log([r["d"] for r in rows])
    a = np.log([abs(r["A"]) for r in rows])
    return float(np.polyfit(d, a, 1)[0])


def _sweep_summary(trace: FlowTrace, params, initial):
    rows = excess_distance_sweep(seed=params["sweep_seed"], extent=params["sweep_extent"],
                                 n=params["sweep_n"])
    slope = sweep_slope(rows)
    return {"sweep_slope": slope, "sweep_all_bounded": all(r["ok"] for r in rows),
            "sweep_pass": bool(slope >= 1.1 and all(r["ok"] for r in rows))}, {"sweep": rows}


register(Scenario(
    "S6", "excess-distance",
    "Graphs of random exact 1-forms over the canonical pair; the flow of one "
    "member is recorded and the summary holds the excess-distance sweep.",
    {"delta": 0.05, "extent": 8.0, "n": 129, "sweep_seed": 0, "sweep_extent": 10.0, "sweep_n": 201},
    {"t_max": 0.5, "checkpoint_dt": 0.05},
    _monitor(1.0),
    lambda p, rng: near_pair_state(geom.canonical_pair(), p["delta"], near_pair_potentials(rng),
                                   p["extent"], p["n"]),
    lambda p, s0: {"D_V": lambda s, t: dg.dist_DV(sf.embed(s), geom.canonical_pair())},
    _sweep_summary,
    ("huisken", "excess", "D_V"),
    lambda p, text=None: _positive(p, ["extent", "n", "sweep_extent", "sweep_n"], text),
))


# ---------------------------------------------------------------- S7 angle gap

def angle_gap_state(c: float, bump: float, extent: float, n: int, rng: np.random.Generator):
    """Canonical pair tilted by the static ``u01`` mode plus a random bump.

    ``u01 = (d(c|x|^2), d(-c|x|^2))`` turns the canonical pair into a
    non-special pair of planes with angle gap ``4 arctan(2c)``.
    """
    V = geom.canonical_pair()
    b = rng.normal(size=2)

    def f1(x, y):
        return c * (x * x + y * y) + bump * b[0] * np.exp(-((x - 0.3) ** 2 + y * y) / 2)

    def f2(x, y):
        return -c * (x * x + y * y) + bump * b[1] * np.exp(-(x * x + (y + 0.2) ** 2) / 2)

    return sf.TwoChartGraph(V, sf.cartesian_graph(V.p1, f1, extent, n),
                            sf.cartesian_graph(V.p2, f2, extent, n))


def _gap_summary(trace: FlowTrace, params, initial):
    gap = 4 * math.atan(2 * abs(params["c"]))
    osc = trace.channel("theta_osc")
    return {"angle_gap": gap, "theta_osc_min": float(np.nanmin(osc)),
            "osc_over_gap_min": float(np.nanmin(osc) / gap) if gap > 0 else math.inf}, {}


register(Scenario(
    "S7", "angle-gap",
    "Non-special pair obtained by injecting the static u01 mode; the angle "
    "oscillation on the annulus B2 minus B1/2 stays bounded below by the gap.",
    {"c": 0.05, "bump": 0.05, "extent": 8.0, "n": 129},
    {"t_max": 0.5, "checkpoint_dt": 0.05},
    _monitor(1.0),
    lambda p, rng: angle_gap_state(p["c"], p["bump"], p["extent"], p["n"], rng),
    lambda p, s0: {"theta_osc": lambda s, t: dg.theta_oscillation(sf.embed(s), 0.5, 2.0)},
    _gap_summary,
    ("huisken", "excess", "theta_osc"),
    lambda p, text=None: _positive(p, ["extent", "n"], text),
))


def build_initial(cfg):
    sc = get_scenario(cfg.scenario)
    return sc.build(cfg.params, np.random.default_rng(cfg.seed))
