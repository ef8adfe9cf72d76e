"""Time evolution by Lagrangian mean curvature flow.

Engines
-------
potential
    ``df/dt = theta(D^2 f) = arctan l1 + arctan l2`` on Cartesian or polar
    grids, explicit RK2 (Heun), Dirichlet far field in a gauge where boundary
    values advance by the mean boundary angle.
mesh
    ``dx/dt = Delta_M x`` with the cotangent Laplacian and lumped mass.
curves
    curve shortening of each factor of a product (exact for products).
profile
    SO(2)-equivariant profiles, ``gamma_t = theta_s nu``, ends pinned.

The rescaled flow is a view: :func:`rescale_view` maps stored checkpoints to
``M_tau = exp(tau/2) (L_{t0 - exp(-tau)} - x0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import surface as sf
from .errors import (CFLViolation, DegenerateTriangle, LabError, NonFinite, OutOfRange,
                     PolylineCollapse, ProfileCollapse)
from .surface import (CurveProduct, EquivariantProfile, Mesh4D, PotentialGraph,
                      TwoChartGraph)


# ---------------------------------------------------------------- control

@dataclass
class StepControl:
    """Step size policy and stop conditions.

    Parameters
    ----------
    cfl : parabolic CFL constant, ``dt = cfl * h^2``
    t_max : stop time
    max_steps : hard step limit
    checkpoint_dt : regular checkpoint cadence in t
    pinch_gauge_ratio : after pinch detection, checkpoint whenever the pinch
        gauge drops by this factor (geometric refinement toward the singular time)
    stop_gauge : stop once the pinch gauge falls below this value
    blowup_guard : abort if any coordinate exceeds this magnitude
    redistribute_every : profile/curve resampling cadence in steps
    """

    cfl: float = 0.2
    t_max: float = 1.0
    max_steps: int = 10_000_000
    checkpoint_dt: float = 0.1
    pinch_gauge_ratio: float = 2 ** 0.25
    stop_gauge: float = 0.0
    pinch_threshold: Optional[float] = None
    blowup_guard: float = 1e6
    redistribute_every: int = 10
    redistribute_floor: float = 0.3
    collapse_area: float = 1e-4

    def __post_init__(self):
        if not (0 < self.cfl <= 0.5):
            raise CFLViolation(f"cfl must lie in (0, 0.5], got {self.cfl}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------- potential engine

def _min_spacing(g: PotentialGraph) -> float:
    if g.kind == "polar":
        return float(min(np.diff(g.u).min(), g.u[0] * (g.v[1] - g.v[0]) if g.u[0] > 0 else np.inf))
    return float(min(g.u[1] - g.u[0], g.v[1] - g.v[0]))


def boundary_rate(g: PotentialGraph) -> float:
    """Mean Lagrangian angle over the frozen nodes (gauge speed of boundary values)."""
    return float(np.mean(g.theta_field()[g.frozen_mask()]))


def step_potential(g: PotentialGraph, dt: float, cfl: float = 0.2,
                   rate: Optional[float] = None) -> PotentialGraph:
    """One Heun step of ``df/dt = theta(D^2 f)``.

    Frozen nodes advance by the constant ``rate`` (default: mean boundary
    angle), which leaves the boundary geometry fixed while matching the
    constant that interior values gain on exact planes.
    """
    h = _min_spacing(g)
    if dt > cfl * h * h * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds {cfl}*h^2={cfl * h * h:.3e}")
    mask = g.frozen_mask()
    if rate is None:
        rate = boundary_rate(g)
    k1 = g.theta_field()
    f1 = g.f + dt * k1
    f1[mask] = g.f[mask] + dt * rate
    k2 = g.theta_field(f1)
    f = g.f + 0.5 * dt * (k1 + k2)
    f[mask] = g.f[mask] + dt * rate
    if not np.all(np.isfinite(f)):
        raise NonFinite("potential became non-finite")
    return replace(g, f=f)


def step_twochart(t: TwoChartGraph, dt: float, cfl: float = 0.2, rates=None) -> TwoChartGraph:
    """Step each annular chart independently with Dirichlet data at both radii."""
    r1, r2 = (None, None) if rates is None else rates
    return TwoChartGraph(t.V, step_potential(t.chart1, dt, cfl, r1),
                         step_potential(t.chart2, dt, cfl, r2), t.eps, t.blend)


def radial_reference(f0: Callable, R: float, n: int, t_end: float, cfl: float = 0.2):
    """Independent 1D solver for radial potentials.

    Solves ``g_t = arctan(g_rr) + arctan(g_r / r)`` on ``[0, R]`` with the
    symmetry condition at 0 (where both eigenvalues equal ``g_rr``) and the
    gauge-shifted Dirichlet condition at ``R``.  Returns ``(r, g)``.
    """
    r = np.linspace(0, R, n)
    h = r[1] - r[0]
    g = f0(r).astype(float)

    def rhs(g):
        out = np.empty_like(g)
        grr = np.empty_like(g)
        grr[1:-1] = (g[2:] - 2 * g[1:-1] + g[:-2]) / h ** 2
        grr[0] = 2 * (g[1] - g[0]) / h ** 2
        grr[-1] = (2 * g[-1] - 5 * g[-2] + 4 * g[-3] - g[-4]) / h ** 2
        gr = np.empty_like(g)
        gr[1:-1] = (g[2:] - g[:-2]) / (2 * h)
        gr[-1] = (3 * g[-1] - 4 * g[-2] + g[-3]) / (2 * h)
        out[1:] = np.arctan(grr[1:]) + np.arctan(gr[1:] / r[1:])
        out[0] = 2 * np.arctan(grr[0])
        return out

    rate = rhs(g)[-1]
    dt = cfl * h * h
    nsteps = int(math.ceil(t_end / dt))
    dt = t_end / nsteps
    for _ in range(nsteps):
        k1 = rhs(g)
        g1 = g + dt * k1
        g1[-1] = g[-1] + dt * rate
        k2 = rhs(g1)
        gn = g + 0.5 * dt * (k1 + k2)
        gn[-1] = g[-1] + dt * rate
        g = gn
    return r, g


# ---------------------------------------------------------------- mesh engine

def mesh_dt(m: Mesh4D, cfl: float) -> float:
    return cfl * float(m.edge_lengths().min()) ** 2


def step_mesh(m: Mesh4D, dt: float, cfl: float = 0.2) -> Mesh4D:
    """One Heun step of ``dx/dt = Delta_M x`` (boundary vertices fixed)."""
    h = float(m.edge_lengths().min())
    if dt > cfl * h * h * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds {cfl}*h^2")

    def vel(V):
        area = Mesh4D(V, m.faces, m.boundary).face_areas()
        if area.min() <= 1e-14 * max(area.max(), 1e-300):
            raise DegenerateTriangle("triangle collapsed")
        L, mass = sf.cotan_laplacian(V, m.faces)
        v = (L @ V) / mass[:, None]
        v[m.boundary] = 0.0
        return v

    k1 = vel(m.vertices)
    k2 = vel(m.vertices + dt * k1)
    V = m.vertices + 0.5 * dt * (k1 + k2)
    if not np.all(np.isfinite(V)):
        raise NonFinite("mesh vertices became non-finite")
    return Mesh4D(V, m.faces, m.boundary, m.graded_hint, m.theta_ref)


# ---------------------------------------------------------------- curve engine

def resample_closed(g: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    """Uniform-arclength resampling of a closed polyline (periodic cubic spline)."""
    n = len(g) if n is None else n
    ge = np.concatenate([g, g[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(ge)))])
    cs = CubicSpline(s, np.stack([ge.real, ge.imag], 1), bc_type="periodic")
    q = cs(np.linspace(0, s[-1], n, endpoint=False) + 0.0)
    # keep the first vertex fixed to avoid drift of the parameterization
    return q[:, 0] + 1j * q[:, 1]


def curve_dt(c: CurveProduct, cfl: float) -> float:
    m = min(sf._seg(c.gamma1, c.closed1).min(), sf._seg(c.gamma2, c.closed2).min())
    return cfl * float(m) ** 2


def _csf_velocity(g, closed):
    _, k, _ = sf.curve_geometry(g, closed)
    if not closed:
        k[0] = k[-1] = 0
    return k


def step_curves(c: CurveProduct, dt: float, cfl: float = 0.2, collapse_area: float = 1e-4,
                resample: bool = True) -> CurveProduct:
    """One Heun step of curve shortening on both factors.

    Raises :class:`PolylineCollapse` when a closed factor's enclosed area
    falls below ``collapse_area``.
    """
    h = min(sf._seg(c.gamma1, c.closed1).min(), sf._seg(c.gamma2, c.closed2).min())
    if dt > cfl * h * h * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds {cfl}*h^2")
    out = []
    for g, closed in ((c.gamma1, c.closed1), (c.gamma2, c.closed2)):
        k1 = _csf_velocity(g, closed)
        k2 = _csf_velocity(g + dt * k1, closed)
        gn = g + 0.5 * dt * (k1 + k2)
        if closed:
            if abs(sf.polygon_area(gn)) < collapse_area:
                raise PolylineCollapse(f"area {abs(sf.polygon_area(gn)):.2e} below threshold")
            if resample:
                gn = resample_closed(gn)
        out.append(gn)
    return CurveProduct(out[0], out[1], c.closed1, c.closed2)


# ---------------------------------------------------------------- profile engine

def profile_dt(p: EquivariantProfile, cfl: float) -> float:
    return cfl * float(np.abs(np.diff(p.gamma)).min()) ** 2


def step_profile(p: EquivariantProfile, dt: float, cfl: float = 0.2) -> EquivariantProfile:
    """One Heun step of the equivariant flow (normal motion, pinned ends)."""
    h = float(np.abs(np.diff(p.gamma)).min())
    if dt > cfl * h * h * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds {cfl}*h^2")
    v1, _, _ = sf.profile_velocity(p.gamma)
    g1 = p.gamma + dt * v1
    v2, _, _ = sf.profile_velocity(g1)
    g = p.gamma + 0.5 * dt * (v1 + v2)
    if not np.all(np.isfinite(g)):
        raise NonFinite("profile became non-finite")
    return EquivariantProfile(g, p.n_alpha)


# ---------------------------------------------------------------- generic stepping

def engine_of(s) -> str:
    return {PotentialGraph: "potential", TwoChartGraph: "twochart", Mesh4D: "mesh",
            CurveProduct: "curves", EquivariantProfile: "profile"}[type(s)]


def pinch_gauge(s) -> float:
    """Scale of the forming singularity (inf when the engine has none)."""
    if isinstance(s, EquivariantProfile):
        return s.rmin
    if isinstance(s, CurveProduct):
        a = [abs(sf.polygon_area(g)) for g, c in ((s.gamma1, s.closed1), (s.gamma2, s.closed2)) if c]
        return math.sqrt(min(a) / math.pi) if a else math.inf
    return math.inf


def neck_gauge(s) -> float:
    """``|zw|`` at the point closest to the origin (profile engine: ``|Re g Im g|``).

    Other engines carry no neck and return inf.
    """
    if isinstance(s, EquivariantProfile):
        k = int(np.argmin(np.abs(s.gamma)))
        return float(abs(s.gamma[k].real * s.gamma[k].imag))
    return math.inf


def typical_spacing(s) -> float:
    """Median node spacing (profiles, curves) or grid spacing."""
    if isinstance(s, EquivariantProfile):
        return float(np.median(np.abs(np.diff(s.gamma))))
    if isinstance(s, CurveProduct):
        return float(np.median(np.concatenate([sf._seg(s.gamma1, s.closed1), sf._seg(s.gamma2, s.closed2)])))
    return float(s.h)


@dataclass
class StepAux:
    """Integrator bookkeeping that must survive checkpoint/resume."""

    step: int = 0
    rates: Optional[list] = None
    n_nodes: Optional[int] = None

    def to_dict(self):
        return {"step": self.step, "rates": self.rates, "n_nodes": self.n_nodes}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("step", 0), d.get("rates"), d.get("n_nodes"))


def advance(s, ctl: StepControl, aux: StepAux, t_limit: float):
    """Take one step (not past ``t_limit``); returns (state, dt)."""
    if isinstance(s, PotentialGraph):
        if aux.rates is None:
            aux.rates = [boundary_rate(s)]
        dt = min(ctl.cfl * _min_spacing(s) ** 2, t_limit)
        return step_potential(s, dt, ctl.cfl, aux.rates[0]), dt
    if isinstance(s, TwoChartGraph):
        if aux.rates is None:
            aux.rates = [boundary_rate(s.chart1), boundary_rate(s.chart2)]
        dt = min(ctl.cfl * min(_min_spacing(s.chart1), _min_spacing(s.chart2)) ** 2, t_limit)
        return step_twochart(s, dt, ctl.cfl, aux.rates), dt
    if isinstance(s, Mesh4D):
        dt = min(mesh_dt(s, ctl.cfl), t_limit)
        return step_mesh(s, dt, ctl.cfl), dt
    if isinstance(s, CurveProduct):
        dt = min(curve_dt(s, ctl.cfl), t_limit)
        return step_curves(s, dt, ctl.cfl, ctl.collapse_area,
                           resample=aux.step % ctl.redistribute_every == 0), dt
    if isinstance(s, EquivariantProfile):
        if aux.n_nodes is None:
            aux.n_nodes = len(s.gamma)
        if aux.step % ctl.redistribute_every == 0:
            g = sf.redistribute_profile(s.gamma, aux.n_nodes, ctl.redistribute_floor * s.rmin)
            s = EquivariantProfile(g, s.n_alpha)
        dt = min(profile_dt(s, ctl.cfl), t_limit)
        out = step_profile(s, dt, ctl.cfl)
        if ctl.stop_gauge > 0 and out.rmin < ctl.stop_gauge * 0.5:
            raise ProfileCollapse("profile reached the origin")
        return out, dt
    raise LabError(f"no engine for {type(s).__name__}")


# ---------------------------------------------------------------- trace

@dataclass
class Checkpoint:
    t: float
    state: object
    aux: StepAux
    sched: dict


@dataclass
class FlowTrace:
    """Checkpoints, aligned diagnostic channels, events and the singular-time estimate."""

    checkpoints: List[Checkpoint] = field(default_factory=list)
    channels: Dict[str, List[float]] = field(default_factory=dict)
    events: List[dict] = field(default_factory=list)
    T_hat: Optional[float] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([c.t for c in self.checkpoints])

    @property
    def states(self) -> list:
        return [c.state for c in self.checkpoints]

    def channel(self, name: str) -> np.ndarray:
        return np.asarray(self.channels[name], dtype=float)

    def check(self):
        t = self.times
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise LabError("checkpoint times not strictly increasing")
        for k, v in self.channels.items():
            if len(v) != len(t):
                raise LabError(f"channel {k} misaligned")

    def has_event(self, kind: str) -> bool:
        return any(e["kind"] == kind for e in self.events)


ChannelFn = Callable[[object, float], float]


def _record(trace: FlowTrace, ck: Checkpoint, channels: Dict[str, ChannelFn]):
    trace.checkpoints.append(ck)
    for name, fn in channels.items():
        trace.channels.setdefault(name, []).append(float(fn(ck.state, ck.t)))


def estimate_singular_time(trace: FlowTrace) -> Optional[float]:
    """Extrapolate the singular time from the squared pinch gauge.

    Curve products use the exact area law ``dA/dt = -2 pi`` (convex factors).
    Profiles fit ``gauge^2`` linearly in t over the last four checkpoints.
    """
    if not trace.checkpoints:
        return None
    last = trace.checkpoints[-1]
    s = last.state
    if isinstance(s, CurveProduct):
        a = [abs(sf.polygon_area(g)) for g, c in ((s.gamma1, s.closed1), (s.gamma2, s.closed2)) if c]
        return last.t + min(a) / (2 * math.pi) if a else None
    if isinstance(s, EquivariantProfile):
        ts = trace.times[-4:]
        g2 = np.array([c.state.rmin ** 2 for c in trace.checkpoints[-4:]])
        if len(ts) < 2:
            return None
        A = np.vstack([ts, np.ones_like(ts)]).T
        slope, icpt = np.linalg.lstsq(A, g2, rcond=None)[0]
        if slope >= 0:
            return None
        return float(-icpt / slope)
    return None


def run(initial, ctl: StepControl, channels: Optional[Dict[str, ChannelFn]] = None,
        trace: Optional[FlowTrace] = None, on_checkpoint: Optional[Callable] = None) -> FlowTrace:
    """Integrate from ``initial`` (or resume ``trace``) until a stop condition.

    Checkpoints are taken every ``checkpoint_dt``; after pinch detection they
    are also taken whenever the pinch gauge drops by ``pinch_gauge_ratio``.
    Errors from the engines stop the run; the last good checkpoint is kept
    and the error is logged as an event.
    """
    channels = channels or {}
    if trace is None:
        trace = FlowTrace()
        ck = Checkpoint(0.0, initial, StepAux(), {"next_t": ctl.checkpoint_dt,
                                                   "gauge_ck": pinch_gauge(initial),
                                                   "pinch": False})
        _record(trace, ck, channels)
        if on_checkpoint:
            on_checkpoint(trace, ck)
    last = trace.checkpoints[-1]
    s, t = last.state, last.t
    aux = StepAux.from_dict(last.aux.to_dict())
    sched = dict(last.sched)
    stop_reason = "t_max"
    while True:
        if t >= ctl.t_max - 1e-15 or aux.step >= ctl.max_steps:
            stop_reason = "t_max" if t >= ctl.t_max - 1e-15 else "max_steps"
            break
        t_limit = min(ctl.t_max, sched["next_t"]) - t
        try:
            s_new, dt = advance(s, ctl, aux, t_limit)
        except (PolylineCollapse, ProfileCollapse) as exc:
            trace.events.append({"t": t, "kind": "collapse", "info": str(exc)})
            stop_reason = "collapse"
            break
        except LabError as exc:
            trace.events.append({"t": t, "kind": "error", "info": f"{type(exc).__name__}: {exc}"})
            stop_reason = "error"
            break
        s = s_new
        aux.step += 1
        t = t + dt
        if isinstance(s, Mesh4D) and np.abs(s.vertices).max() > ctl.blowup_guard:
            trace.events.append({"t": t, "kind": "error", "info": "blowup guard"})
            stop_reason = "error"
            break
        g = pinch_gauge(s)
        thr = ctl.pinch_threshold
        if thr is None:
            thr = 10 * typical_spacing(s) ** 2
        if not sched["pinch"] and thr is not None and neck_gauge(s) < thr:
            sched["pinch"] = True
            sched["gauge_ck"] = g
            trace.events.append({"t": t, "kind": "pinch-detected", "info": f"neck gauge {neck_gauge(s):.3e}"})
        take = t >= sched["next_t"] - 1e-15
        if sched["pinch"] and g <= sched["gauge_ck"] / ctl.pinch_gauge_ratio:
            take = True
        stop_now = ctl.stop_gauge > 0 and g <= ctl.stop_gauge
        if take or stop_now:
            while sched["next_t"] <= t + 1e-15:
                sched["next_t"] += ctl.checkpoint_dt
            if sched["pinch"]:
                sched["gauge_ck"] = g
            ck = Checkpoint(t, s, StepAux.from_dict(aux.to_dict()), dict(sched))
            _record(trace, ck, channels)
            if on_checkpoint:
                on_checkpoint(trace, ck)
        if stop_now:
            stop_reason = "stop_gauge"
            break
    trace.T_hat = estimate_singular_time(trace)
    trace.events.append({"t": t, "kind": "stopped", "info": stop_reason})
    return trace


# ---------------------------------------------------------------- rescaling

def scale_state(s, lam: float, center=None):
    """Parabolic spatial rescaling ``x -> lam (x - center)`` of a state."""
    c = np.zeros(4) if center is None else np.asarray(center, dtype=float)
    if isinstance(s, Mesh4D):
        return Mesh4D(lam * (s.vertices - c), s.faces, s.boundary, s.graded_hint, s.theta_ref)
    if isinstance(s, CurveProduct):
        return CurveProduct(lam * (s.gamma1 - complex(c[0], c[1])),
                            lam * (s.gamma2 - complex(c[2], c[3])), s.closed1, s.closed2)
    if isinstance(s, EquivariantProfile):
        if np.any(c != 0):
            raise OutOfRange("equivariant profiles can only be rescaled about the origin")
        return EquivariantProfile(lam * s.gamma, s.n_alpha)
    if isinstance(s, PotentialGraph):
        if np.any(c != 0):
            raise OutOfRange("graphs are rescaled about the origin")
        return PotentialGraph(s.base, lam * s.u, s.v if s.kind == "polar" else lam * s.v,
                              lam ** 2 * s.f, s.kind, s.boundary)
    if isinstance(s, TwoChartGraph):
        return TwoChartGraph(s.V, scale_state(s.chart1, lam, c), scale_state(s.chart2, lam, c),
                             None if s.eps is None else lam ** 2 * s.eps, s.blend)
    if isinstance(s, sf.SampleSet):
        return s.scaled(lam, c)
    raise OutOfRange(f"cannot rescale {type(s).__name__}")


def _interp_states(a, b, w: float):
    if w == 0.0:
        return a
    if w == 1.0:
        return b
    if isinstance(a, Mesh4D):
        return Mesh4D((1 - w) * a.vertices + w * b.vertices, a.faces, a.boundary, a.graded_hint, a.theta_ref)
    if isinstance(a, CurveProduct):
        return CurveProduct((1 - w) * a.gamma1 + w * b.gamma1, (1 - w) * a.gamma2 + w * b.gamma2,
                            a.closed1, a.closed2)
    if isinstance(a, EquivariantProfile):
        return EquivariantProfile((1 - w) * a.gamma + w * b.gamma, a.n_alpha)
    if isinstance(a, PotentialGraph):
        return replace(a, f=(1 - w) * a.f + w * b.f)
    if isinstance(a, TwoChartGraph):
        return TwoChartGraph(a.V, _interp_states(a.chart1, b.chart1, w),
                             _interp_states(a.chart2, b.chart2, w), a.eps, a.blend)
    raise OutOfRange("cannot interpolate states")


def state_at(trace: FlowTrace, t: float):
    """State at time t, linearly interpolated between bracketing checkpoints."""
    ts = trace.times
    if t < ts[0] - 1e-15 or t > ts[-1] + 1e-15:
        raise OutOfRange(f"t={t} outside [{ts[0]}, {ts[-1]}]")
    k = int(np.searchsorted(ts, t))
    if k < len(ts) and abs(ts[k] - t) <= 1e-15:
        return trace.checkpoints[k].state
    k = min(max(k, 1), len(ts) - 1)
    w = (t - ts[k - 1]) / (ts[k] - ts[k - 1])
    return _interp_states(trace.checkpoints[k - 1].state, trace.checkpoints[k].state, float(w))


def rescale_view(trace: FlowTrace, center, tau: float):
    """Rescaled-flow view ``M_tau = exp(tau/2) (L_{t0 - exp(-tau)} - x0)``."""
    x0, t0 = center
    t = t0 - math.exp(-tau)
    s = state_at(trace, t)
    return scale_state(s, math.exp(tau / 2), x0)


def tau_of(t: float, t0: float) -> float:
    return -math.log(t0 - t)


# ---------------------------------------------------------------- persistence

TRACE_SCHEMA = "lmcflab.trace/1"


def _fmt(x: float) -> str:
    return repr(float(x))


class TraceWriter:
    """Incremental on-disk trace: ``manifest.json``, ``checkpoints/*.json``, ``channels.csv``.

    Use the instance as the ``on_checkpoint`` callback of :func:`run`.
    Floats are written with ``repr`` so that files round-trip bit-exactly.
    """

    def __init__(self, directory, meta: Optional[dict] = None):
        import pathlib
        self.dir = pathlib.Path(directory)
        (self.dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        self.meta = dict(meta or {})

    def __call__(self, trace: FlowTrace, ck: Checkpoint):
        k = len(trace.checkpoints) - 1
        self._write_checkpoint(k, ck)
        self.write_csv(trace)
        self.write_manifest(trace)

    def _write_checkpoint(self, k: int, ck: Checkpoint):
        import json
        doc = {"schema": TRACE_SCHEMA, "index": k, "t": ck.t, "aux": ck.aux.to_dict(),
               "sched": ck.sched, "state": sf.state_to_dict(ck.state)}
        doc.update({key: self.meta[key] for key in ("config_hash", "version") if key in self.meta})
        (self.dir / "checkpoints" / f"ck_{k:05d}.json").write_text(json.dumps(doc))

    def write_csv(self, trace: FlowTrace):
        names = sorted(trace.channels)
        lines = []
        for key in ("config_hash", "version"):
            if key in self.meta:
                lines.append(f"# {key}={self.meta[key]}")
        lines.append(",".join(["t"] + names))
        for i, ck in enumerate(trace.checkpoints):
            lines.append(",".join([_fmt(ck.t)] + [_fmt(trace.channels[n][i]) for n in names]))
        (self.dir / "channels.csv").write_text("\n".join(lines) + "\n")

    def write_manifest(self, trace: FlowTrace):
        import json
        doc = {"schema": TRACE_SCHEMA, **self.meta,
               "checkpoints": [{"index": i, "t": c.t, "file": f"checkpoints/ck_{i:05d}.json"}
                               for i, c in enumerate(trace.checkpoints)],
               "channels": sorted(trace.channels),
               "events": trace.events,
               "T_hat": trace.T_hat}
        (self.dir / "manifest.json").write_text(json.dumps(doc, indent=1))

    def finalize(self, trace: FlowTrace):
        self.write_csv(trace)
        self.write_manifest(trace)


def load_trace(directory) -> FlowTrace:
    """Rebuild a :class:`FlowTrace` from a trace directory."""
    import json
    import pathlib
    d = pathlib.Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    if man.get("schema") != TRACE_SCHEMA:
        raise LabError(f"unsupported trace schema {man.get('schema')}")
    trace = FlowTrace(events=list(man.get("events", [])), T_hat=man.get("T_hat"))
    for entry in man["checkpoints"]:
        doc = json.loads((d / entry["file"]).read_text())
        trace.checkpoints.append(Checkpoint(doc["t"], sf.state_from_dict(doc["state"]),
                                            StepAux.from_dict(doc["aux"]), doc["sched"]))
    names = man.get("channels", [])
    rows = [ln for ln in (d / "channels.csv").read_text().splitlines() if ln and not ln.startswith("#")]
    header = rows[0].split(",")
    cols = {n: [] for n in names}
    for ln in rows[1:]:
        vals = ln.split(",")
        for n in names:
            cols[n].append(float(vals[header.index(n)]))
    trace.channels = cols
    return trace


def truncate_trace(trace: FlowTrace, index: int) -> FlowTrace:
    """Copy of ``trace`` keeping checkpoints ``0..index``."""
    n = index % len(trace.checkpoints) + 1
    t_cut = trace.checkpoints[n - 1].t
    return FlowTrace(list(trace.checkpoints[:n]),
                     {k: list(v[:n]) for k, v in trace.channels.items()},
                     [e for e in trace.events if e["t"] <= t_cut and e["kind"] != "stopped"],
                     None)


def resume(directory, ctl: StepControl, channels: Optional[Dict[str, ChannelFn]] = None,
           index: int = -1, meta: Optional[dict] = None) -> FlowTrace:
    """Continue a stored run from checkpoint ``index`` and rewrite the directory."""
    import json
    import pathlib
    d = pathlib.Path(directory)
    trace = truncate_trace(load_trace(d), index)
    n = len(trace.checkpoints)
    for p in sorted((d / "checkpoints").glob("ck_*.json")):
        if int(p.stem[3:]) >= n:
            p.unlink()
    if meta is None:
        man = json.loads((d / "manifest.json").read_text())
        meta = {k: v for k, v in man.items()
                if k not in ("schema", "checkpoints", "channels", "events", "T_hat")}
    writer = TraceWriter(d, meta)
    trace = run(None, ctl, channels, trace=trace, on_checkpoint=writer)
    writer.finalize(trace)
    return trace
