"""Verification suites.

Each suite returns a :class:`SuiteReport` holding one :class:`Check` per
measured quantity (value, tolerance, verdict).  ``lmcflab verify <suite>``
prints the report as JSON and exits with status 4 when a check fails.
"""

from __future__ import annotations

import json
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .. import diagnostics as dg
from .. import drift, flow, geom
from .. import surface as sf
from ..diagnostics import jsonable
from ..errors import UnknownSuite
from .config import default_config
from .runner import run_config
from .scenarios import (build_initial, excess_distance_sweep, get_scenario, list_scenarios,
                        sweep_slope)


@dataclass
class Check:
    name: str
    value: float
    tol: Optional[float]
    passed: bool
    detail: str = ""

    def line(self) -> str:
        tol = "" if self.tol is None else f" (tol {self.tol:.3g})"
        v = self.value
        vs = f"{v:.6g}" if isinstance(v, (float, int)) else str(v)
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {vs}{tol} {self.detail}".rstrip()


@dataclass
class SuiteReport:
    suite: str
    checks: List[Check] = field(default_factory=list)
    runtime: float = 0.0
    runtime_limit: Optional[float] = None

    @property
    def passed(self) -> bool:
        ok = all(c.passed for c in self.checks)
        if self.runtime_limit is not None:
            ok = ok and self.runtime <= self.runtime_limit
        return ok

    def add(self, name, value, tol=None, passed=None, detail=""):
        if passed is None:
            passed = bool(np.isfinite(value) and value <= tol)
        self.checks.append(Check(name, value, tol, bool(passed), detail))

    def to_dict(self):
        return jsonable({"suite": self.suite, "passed": self.passed, "runtime": self.runtime,
                         "runtime_limit": self.runtime_limit,
                         "checks": [c.__dict__ for c in self.checks]})

    def text(self) -> str:
        lines = [c.line() for c in self.checks]
        lim = "" if self.runtime_limit is None else f" (limit {self.runtime_limit:.0f} s)"
        lines.append(f"{self.suite}: {'PASS' if self.passed else 'FAIL'} in {self.runtime:.1f} s{lim}")
        return "\n".join(lines)


_SUITES: Dict[str, Callable] = {}
_LIMITS: Dict[str, float] = {}


def suite(name: str, limit: Optional[float] = None):
    def deco(fn):
        _SUITES[name] = fn
        if limit is not None:
            _LIMITS[name] = limit
        return fn
    return deco


def suite_names() -> List[str]:
    return sorted(_SUITES)


def run_suite(name: str, **kw) -> SuiteReport:
    if name not in _SUITES:
        raise UnknownSuite(f"unknown suite {name!r} (available: {', '.join(suite_names())})")
    rep = SuiteReport(name, runtime_limit=_LIMITS.get(name))
    t0 = time.perf_counter()
    _SUITES[name](rep, **kw)
    rep.runtime = time.perf_counter() - t0
    return rep


def run_in_memory(cfg):
    """Run a configuration without writing files; returns (trace, summary, tables)."""
    sc = get_scenario(cfg.scenario)
    initial = build_initial(cfg)
    trace = flow.run(initial, cfg.step_control(), sc.channels(cfg, initial))
    summary, tables = sc.summarize(trace, cfg.params, initial)
    return trace, summary, tables


# ---------------------------------------------------------------- 1: statics

@suite("statics", limit=60.0)
def _statics(rep: SuiteReport):
    for name in ("S1", "S2"):
        cfg = default_config(name)
        trace, summary, _ = run_in_memory(cfg)
        h = summary["h"]
        rep.add(f"{name} max displacement / h^2", summary["displacement_over_h2"], 5.0,
                detail=f"(displacement {summary['max_displacement']:.3e}, h {h:.3g})")


# ---------------------------------------------------------------- 2: shrinkers

def sphere_control(r0: float = 1.0, level: int = 4, t_end: float = 0.2, cfl: float = 0.2):
    """Round sphere under MCF in R^3 (a codimension-2 sphere in R^4); ``r^2 = r0^2 - 4t``."""
    m = sf.sphere_mesh(r0, level)
    tr = flow.run(m, flow.StepControl(cfl=cfl, t_max=t_end, checkpoint_dt=t_end / 4))
    worst = 0.0
    for ck in tr.checkpoints:
        r2 = float(np.mean(np.sum(ck.state.vertices ** 2, axis=1)))
        exact = r0 * r0 - 4 * ck.t
        worst = max(worst, abs(r2 - exact) / exact)
    return worst


@suite("shrinkers", limit=60.0)
def _shrinkers(rep: SuiteReport):
    cfg = default_config("S3")
    trace, summary, _ = run_in_memory(cfg)
    rep.add("circle product r^2 = r0^2 - 2t (relative, r >= 0.3)", summary["max_rel_err_r2"], 1e-3)
    rep.add("circle product |T_hat - 0.5|", abs(summary["pinch_time"] - 0.5), 1e-3)
    rep.add("sphere r^2 = r0^2 - 4t (relative)", sphere_control(), 0.01)


# ---------------------------------------------------------------- 3: monotonicity

MONOTONE_CHANNELS = ("huisken", "entropy", "excess", "excess_alpha")

# lighter pinch runs for the suite; the full-resolution pinch has its own suite
SUITE_OVERRIDES = {
    "S4": {"params": {"n": 201}, "control": {"stop_gauge": 1e-2}},
    "S5": {"params": {"scan": False}},
}


def _alpha_map(a: float, alpha: float) -> float:
    return math.copysign(abs(a) ** alpha, a)


def monotonicity_defect(values, tols, base=None, alpha: Optional[float] = None):
    """Largest ``increase - allowed`` over consecutive finite pairs (<= 0 means monotone).

    ``allowed`` is the larger tolerance of the pair.  For ``A_alpha`` pass the
    excess values as ``base``; the tolerance is carried through the monotone
    map ``a -> sign(a) |a|^alpha``.
    """
    v = np.asarray(values, dtype=float)
    tol = np.asarray(tols, dtype=float)
    worst, n = -math.inf, 0
    for k in range(len(v) - 1):
        if not (np.isfinite(v[k]) and np.isfinite(v[k + 1])):
            continue
        allowed = max(tol[k], tol[k + 1])
        if base is None:
            d = (v[k + 1] - v[k]) - allowed
        else:
            d = v[k + 1] - _alpha_map(base[k] + allowed, alpha)
        worst = max(worst, d)
        n += 1
    return worst, n


def check_trace_monotone(rep: SuiteReport, label: str, channels: Dict[str, np.ndarray],
                         alpha: float = 0.1):
    for name in MONOTONE_CHANNELS:
        if name not in channels:
            continue
        tol_name = "excess_tol" if name.startswith("excess") else name + "_tol"
        base = channels["excess"] if name == "excess_alpha" else None
        worst, n = monotonicity_defect(channels[name], channels[tol_name], base, alpha)
        if n == 0:
            rep.add(f"{label} {name}", math.nan, None, True, "(undefined along this flow; skipped)")
            continue
        vals = np.asarray(channels[name], float)
        inc = np.nanmax(np.diff(vals)) if len(vals) > 1 else 0.0
        rep.add(f"{label} {name} increase beyond tolerance", worst, 0.0,
                detail=f"(largest raw increase {inc:.3e} over {n} steps)")


@suite("monotonicity", limit=600.0)
def _monotonicity(rep: SuiteReport, scenarios=None):
    for sc in list_scenarios():
        if scenarios and sc.name not in scenarios:
            continue
        cfg = default_config(sc.name, **SUITE_OVERRIDES.get(sc.name, {}))
        trace, summary, tables = run_in_memory(cfg)
        ch = {k: trace.channel(k) for k in trace.channels}
        check_trace_monotone(rep, sc.name, ch, cfg.monitor["alpha"])
        rows = tables.get("rescaled")
        if rows:
            rch = {k: np.array([r[k] for r in rows]) for k in ("excess", "excess_alpha", "excess_tol")}
            check_trace_monotone(rep, f"{sc.name} rescaled-view", rch)


# ---------------------------------------------------------------- 4: spectral

@suite("spectral", limit=300.0)
def _spectral(rep: SuiteReport):
    table, rate = drift.spectrum_table(6)
    worst = max(r[3] for r in table)
    rep.add("drift eigenvalues k <= 6 vs finite differences", worst, 1e-2,
            detail=f"({sum(r[0] + 1 for r in table)} eigenvalues)")
    rep.add("log mode rate |rate - 1|", abs(rate - drift.LOG_RATE), 1e-2, detail=f"(rate {rate:.5f})")
    rep.add("evolve vs evolve_fd weighted L2 at s = 1", evolve_agreement(), 1e-4)


def evolve_agreement(seed: int = 0, L: float = 10.0, n: int = 201, s: float = 1.0,
                     max_degree: int = 4) -> float:
    """Weighted L2 gap between spectral and finite-difference evolution."""
    rng = np.random.default_rng(seed)
    basis = drift.hermite_basis(max_degree)
    c = rng.normal(size=len(basis)) / np.sqrt(len(basis))
    f = drift.SpectralField(0.0, c, basis)
    grid = drift.Grid2D(L, n)
    U0 = drift.sample_on_grid(f, grid)
    U1 = drift.evolve_fd(U0, grid, s)
    ref = drift.sample_on_grid(drift.evolve(f, s), grid)
    return drift.weighted_l2(U1 - ref, grid)


# ---------------------------------------------------------------- 5: three-annulus

@suite("three-annulus", limit=10.0)
def _three_annulus(rep: SuiteReport, n: int = 100_000, seed: int = 0):
    basis = drift.hermite_basis(12)
    rng = np.random.default_rng(seed)
    A0, C = drift.random_coefficients(rng, n, basis)
    mu, static = basis.mu, basis.static_mask()
    lam1, lam2 = drift.LAMBDA1, drift.LAMBDA2
    a = drift.gap_admissible(lam1, lam2)
    rep.add("gap admissible at (0.039, 0.041)", 0.0 if a is not None else 1.0, 0.0,
            detail=f"(a = {a})")
    p1a, p1v, p2a, p2v = drift.three_annulus_batch(A0, C, mu, lam1, lam2, static)
    rep.add("part (1) violations", p1v, 0, detail=f"({p1a} of {n} vectors apply)")
    rep.add("part (2) violations", p2v, 0, detail=f"({p2a} of {n} vectors apply)")
    neg = drift.three_annulus_batch(A0, C, mu, 0.3, 0.302, static)
    total = neg[1] + neg[3]
    rep.add("negative control (0.3, 0.302) violations", total, None, total > 0)


# ---------------------------------------------------------------- 6: excess-distance

@suite("excess-distance", limit=300.0)
def _excess_distance(rep: SuiteReport, seed: int = 0):
    rows = excess_distance_sweep(seed=seed)
    for r in rows:
        rep.add(f"|A| / d^1.1 at d = {r['d']:.3g}", abs(r["A"]) / r["bound"], 1.0,
                detail=f"(|A| {abs(r['A']):.3e})")
    slope = sweep_slope(rows)
    rep.add("log-log slope of |A| against d", slope, None, slope >= 1.1, "(needs >= 1.1)")


# ---------------------------------------------------------------- 7: |zw| equivalence

@suite("zw", limit=120.0)
def _zw(rep: SuiteReport, seed: int = 0, n_points: int = 10_000, n_planes: int = 1000):
    rng = np.random.default_rng(seed)
    lo, hi, ident = math.inf, 0.0, 0.0
    n_pairs = 20
    per = n_points // n_pairs
    for _ in range(n_pairs):
        V = geom.random_special_pair(rng, c2=0.5)
        nc = geom.neck_coordinates(V)
        z = dg.zw_field(rng.normal(size=(per, 4)) * rng.uniform(0.1, 3.0, size=(per, 1)), nc, V)
        lo, hi, ident = min(lo, z.ratio_min), max(hi, z.ratio_max), max(ident, z.identity_error)
        eps = float(rng.uniform(0.01, 0.2)) * rng.choice([-1, 1])
        z = dg.zw_field(sf.lawlor_samples(V, eps, 3.0, 41, 32), nc, V)
        lo, hi = min(lo, z.ratio_min), max(hi, z.ratio_max)
        phis = _graph_potentials(rng)
        g = sf.TwoChartGraph(V, sf.cartesian_graph(V.p1, phis[0], 2.0, 21),
                             sf.cartesian_graph(V.p2, phis[1], 2.0, 21))
        z = dg.zw_field(sf.embed(g), nc, V)
        lo, hi = min(lo, z.ratio_min), max(hi, z.ratio_max)
    rep.add("ratio |zw| / (|x| d_V) lower end", lo, None, lo >= 0.2, "(needs >= 0.2)")
    rep.add("ratio |zw| / (|x| d_V) upper end", hi, 2.0)
    rep.add("min*max = |zw| identity (relative)", ident, 1e-14)
    worst = zw_gradient_ratio(rng, n_planes)
    rep.add("max |grad z . grad w| / |theta - theta_V| over planes", worst, None,
            bool(np.isfinite(worst)), "(must be finite)")


def _graph_potentials(rng, amp: float = 0.02):
    a = rng.normal(size=(2, 3)) * amp

    def make(k):
        return lambda x, y: a[k, 0] * x * x * y + a[k, 1] * np.sin(x) * y + a[k, 2] * (x * x - y * y)
    return make(0), make(1)


def zw_gradient_ratio(rng, n: int = 1000, max_gap: float = 0.3) -> float:
    """``max |grad z . grad w| / |theta - theta_V|`` over random planes near theta_V."""
    worst = 0.0
    pairs = [geom.random_special_pair(rng, c2=0.5) for _ in range(20)]
    ncs = [geom.neck_coordinates(V) for V in pairs]
    for k in range(n):
        V, nc = pairs[k % len(pairs)], ncs[k % len(pairs)]
        P = geom.random_lagrangian_plane(rng)
        gap = float(rng.uniform(-max_gap, max_gap))
        if abs(gap) < 1e-6:
            continue
        rot = geom.wrap_angle(V.theta_V + gap - geom.lagrangian_angle(P))
        P = geom.LagrangianPlane(geom.rotation_z1(rot) @ P.frame)
        d = abs(geom.wrap_angle(geom.lagrangian_angle(P) - V.theta_V))
        worst = max(worst, abs(geom.grad_z_dot_grad_w(P, nc)) / d)
    return worst


# ---------------------------------------------------------------- 8: pinch

@suite("pinch", limit=1800.0)
def _pinch(rep: SuiteReport, out=None):
    cfg = default_config("S4")
    if out is None:
        trace, summary, tables = run_in_memory(cfg)
    else:
        trace, summary, _ = run_config(cfg, out)
    rep.add("pinch detected", float(summary.get("pinch_detected", trace.has_event("pinch-detected"))),
            None, trace.has_event("pinch-detected"))
    rep.add("final neck radius", summary["rmin_final"], cfg.control["stop_gauge"] * 1.0001)
    rep.add("Lawlor sign constant over the final decade", summary["sign"], None,
            summary["sign_constant"], f"({summary['decade_rows']} checkpoints)")
    res = summary["last_residuals"]
    rep.add("lawlor_fit residual at the last 5 scales (max)", max(res), 0.05,
            detail="(" + ", ".join(f"{r:.3g}" for r in res) + ")")
    rep.add("D_V0 of rescaled views, largest step over the final decade",
            summary["D_V_max_increase"], 0.0,
            detail=f"({summary['D_V_first']:.3g} -> {summary['D_V_last']:.3g})")


# ---------------------------------------------------------------- 9: exactness

@suite("exactness", limit=60.0)
def _exactness(rep: SuiteReport):
    V = geom.canonical_pair()
    for eps in (0.2, -0.05):
        loop = dg.lawlor_core_loop(V, eps, 256)
        rep.add(f"Lawlor eps={eps} loop integral of lambda", abs(dg.loop_integral(loop)), 1e-8)
    s = sf.lawlor_samples(V, 0.3, 3.0, 41, 64)
    f = s.frames
    defect = np.abs(np.einsum("ni,ij,nj->n", f[..., 0], geom.KAHLER_STD, f[..., 1]))
    rep.add("Lawlor samples omega defect (max)", float(defect.max()), 1e-10)
    m = sf.lawlor_mesh(V, 0.2, 3.0, 64)
    n_s = len(m.vertices) // 64
    ring = m.vertices.reshape(n_s, 64, 4)[n_s // 2]
    res = dg.liouville_primitive(m, {"core": ring})
    rep.add("Lawlor mesh core ring period", abs(res.loops["core"]), 1e-8,
            detail=f"(tree cycle residual {res.cycle_residual:.2e})")
    c = sf.CurveProduct(sf.circle(1.0, 256), sf.circle(1.0, 256))
    res = dg.liouville_primitive(c)
    for name, v in res.loops.items():
        rep.add(f"torus {name} period - 2 pi", abs(abs(v) - 2 * math.pi), 1e-6)


# ---------------------------------------------------------------- 10: determinism

def csv_bytes(d: Path) -> Dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(Path(d).glob("*.csv"))}


@suite("determinism", limit=300.0)
def _determinism(rep: SuiteReport, scenarios=("S3", "S6", "S4"), workdir=None):
    base = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="lmcflab-det-"))
    for name in scenarios:
        over = SUITE_OVERRIDES.get(name, {})
        if name == "S4":
            over = {"params": {"n": 121}, "control": {"stop_gauge": 3e-2}}
        cfg = default_config(name, **over)
        a, b, c = base / f"{name}-a", base / f"{name}-b", base / f"{name}-c"
        ta, _, _ = run_config(cfg, a)
        run_config(cfg, b)
        run_config(cfg, c)
        k = len(ta.checkpoints) // 2
        run_config(cfg, c, resume_index=k)
        A, B, C = csv_bytes(a), csv_bytes(b), csv_bytes(c)
        rep.add(f"{name} rerun CSVs identical", 0.0 if A == B else 1.0, None, A == B,
                f"({', '.join(A)})")
        rep.add(f"{name} resume from checkpoint {k} CSVs identical", 0.0 if A == C else 1.0,
                None, A == C)


def report_json(rep: SuiteReport) -> str:
    return json.dumps(rep.to_dict(), indent=1)
