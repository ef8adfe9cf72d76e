"""Command line interface: ``python -m lmcflab <command>``.

Commands
--------
run             run a scenario configuration into a trace directory
diag            diagnostics on a stored checkpoint (optionally a tau sweep)
verify          run a verification suite
spectrum        drift-operator eigenvalue table against the finite-difference oracle
list-scenarios  list the built-in scenarios

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 failed verification.
The thread count of the numerical libraries is taken from ``LMCFLAB_THREADS``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4
THREAD_ENV = "LMCFLAB_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_threads():
    n = os.environ.get(THREAD_ENV)
    if n:
        for v in _THREAD_VARS:
            os.environ[v] = n


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lmcflab", description="Lagrangian mean curvature flow laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario configuration")
    r.add_argument("config", help="TOML configuration file")
    r.add_argument("--out", help="output directory (default: output.dir of the config)")
    r.add_argument("--resume", type=int, metavar="INDEX",
                   help="resume the run in --out from checkpoint INDEX")

    d = sub.add_parser("diag", help="diagnostics on a stored checkpoint")
    d.add_argument("trace", help="trace directory")
    d.add_argument("--index", type=int, default=-1, help="checkpoint index (default: last)")
    d.add_argument("--pair", default="canonical",
                   help="'canonical', 'fit' (best fit seeded by canonical) or a JSON pair file")
    d.add_argument("--center", type=float, nargs=4, metavar="X", help="spatial centre (default 0)")
    d.add_argument("--t0", type=float, help="rescale about (center, t0)")
    d.add_argument("--tau", type=float, nargs="*", help="tau grid for a rescaled-view sweep")
    d.add_argument("--samples", action="store_true", help="also write per-sample CSV")
    d.add_argument("--out", help="report directory (default: <trace>/diag)")

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", help="suite name or 'all'")
    v.add_argument("--json", help="write the JSON report here")

    s = sub.add_parser("spectrum", help="drift-operator eigenvalues against finite differences")
    s.add_argument("--k-max", type=int, default=6)
    s.add_argument("--n", type=int, default=161, help="finite-difference grid points per axis")
    s.add_argument("--L", type=float, default=10.0, help="half-width of the finite-difference box")

    sub.add_parser("list-scenarios", help="list the built-in scenarios")
    return p


def _cmd_run(args) -> int:
    from .lab.config import load_config
    from .lab.runner import failed, run_config

    cfg = load_config(args.config)
    trace, summary, out = run_config(cfg, args.out, args.resume)
    print(f"{cfg.scenario}: {len(trace.checkpoints)} checkpoints, t = {trace.checkpoints[-1].t:.6g}")
    print(f"trace written to {out}")
    err = failed(trace)
    if err is not None:
        print(f"numerical failure at t = {err['t']:.6g}: {err['info']}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _load_pair(choice: str, samples):
    from . import diagnostics as dg
    from . import geom

    if choice == "canonical":
        return geom.canonical_pair()
    if choice == "fit":
        return dg.best_fit_pair(samples, geom.canonical_pair()).V
    with open(choice) as fh:
        return geom.PlanePair.from_dict(json.load(fh))


def _diag_one(state, t, V, center, t0, want_samples, out, tag, meta):
    import math

    import numpy as np

    from . import diagnostics as dg
    from . import geom
    from . import surface as sf
    from .errors import LabError

    s = sf.embed(state)
    c = np.zeros(4) if center is None else np.asarray(center, float)
    if t0 is not None:
        if t >= t0:
            raise LabError(f"checkpoint time {t} is not before t0 = {t0}")
        s = s.scaled(1.0 / math.sqrt(t0 - t), c)
        c = np.zeros(4)
    elif center is not None:
        s = s.scaled(1.0, c)
        c = np.zeros(4)
    rep = {**meta, "t": t, "t0": t0}
    rep["excess"] = dg.excess(s).to_dict()
    dist = dg.dist_DV(s, V, report=True)
    rep["distance"] = dist.to_dict()
    try:
        rep["neck"] = dg.lawlor_fit(s, V, c, t=t).to_dict()
    except LabError as exc:
        rep["neck"] = {"error": str(exc)}
    (out / f"{tag}.json").write_text(json.dumps(dg.jsonable(rep), indent=1))
    if want_samples:
        z, w = geom.neck_coordinates(V).zw(s.x)
        zw = np.abs(z * w)
        d = dg.dV_field(s, V)
        lines = [f"# config_hash={meta.get('config_hash')}", f"# version={meta['version']}",
                 "x1,y1,x2,y2,theta,dA,d_V,abs_zw"]
        for row in zip(*s.x.T, s.theta, s.dA, d, zw):
            lines.append(",".join(repr(float(v)) for v in row))
        (out / f"{tag}_samples.csv").write_text("\n".join(lines) + "\n")
    return rep


def _cmd_diag(args) -> int:
    import math
    from pathlib import Path

    from . import __version__, flow
    from . import surface as sf

    trace = flow.load_trace(args.trace)
    man = json.loads((Path(args.trace) / "manifest.json").read_text())
    meta = {"config_hash": man.get("config_hash"), "version": __version__}
    out = Path(args.out or Path(args.trace) / "diag")
    out.mkdir(parents=True, exist_ok=True)
    ck = trace.checkpoints[args.index]
    V = _load_pair(args.pair, sf.embed(ck.state))
    if args.tau:
        t0 = args.t0 if args.t0 is not None else trace.T_hat
        if t0 is None:
            raise SystemExit("--tau needs --t0 or a trace with a singular-time estimate")
        rows = []
        for tau in args.tau:
            t = t0 - math.exp(-tau)
            if t < trace.times[0] or t > trace.times[-1]:
                continue
            state = flow.state_at(trace, t)
            r = _diag_one(state, t, V, args.center, t0, False, out, f"tau_{tau:+.4f}", meta)
            rows.append({"tau": tau, "t": t, "excess": r["excess"]["A"],
                         "D_V": r["distance"]["D_V"], "I_V": r["distance"]["I_V"]})
        from .lab.runner import write_table
        write_table(rows, out / "tau_sweep.csv", meta)
        print(f"{len(rows)} rescaled views written to {out}")
        return EXIT_OK
    rep = _diag_one(ck.state, ck.t, V, args.center, args.t0, args.samples, out,
                    f"ck_{args.index % len(trace.checkpoints):05d}", meta)
    from .diagnostics import jsonable
    print(json.dumps(jsonable({"excess": rep["excess"]["A"], "I_V": rep["distance"]["I_V"],
                               "D_V": rep["distance"]["D_V"], "eps": rep["neck"].get("eps"),
                               "residual": rep["neck"].get("residual")})))
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .lab.suites import run_suite, suite_names

    names = suite_names() if args.suite == "all" else [args.suite]
    reports = []
    for n in names:
        rep = run_suite(n)
        print(rep.text())
        reports.append(rep.to_dict())
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(reports if len(reports) > 1 else reports[0], fh, indent=1)
    return EXIT_OK if all(r["passed"] for r in reports) else EXIT_VERIFY


def _cmd_spectrum(args) -> int:
    from . import drift

    rows, rate = drift.spectrum_table(args.k_max, L=args.L, n=args.n)
    print(f"{'k':>3} {'mult':>4} {'predicted':>10} {'measured':>12} {'max error':>10}")
    for k, pred, meas, err in rows:
        print(f"{k:>3} {k + 1:>4} {pred:>10.4f} {meas:>12.6f} {err:>10.2e}")
    print(f"log mode rate {rate:.6f} (predicted {drift.LOG_RATE})")
    return EXIT_OK


def _cmd_list(args) -> int:
    from .lab.scenarios import list_scenarios

    for sc in list_scenarios():
        print(f"{sc.name}  {sc.title:<18} {sc.doc}")
    return EXIT_OK


def main(argv=None) -> int:
    _apply_threads()
    args = _parser().parse_args(argv)
    from .errors import ConfigError, LabError, NumericalError, UnknownSuite

    cmd = {"run": _cmd_run, "diag": _cmd_diag, "verify": _cmd_verify,
           "spectrum": _cmd_spectrum, "list-scenarios": _cmd_list}[args.command]
    try:
        return cmd(args)
    except (ConfigError, UnknownSuite) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (LabError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
