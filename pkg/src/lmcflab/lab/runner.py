"""Run scenarios into trace directories.

A run directory holds

``manifest.json``      trace manifest with config hash, version and config
``checkpoints/``       one JSON state per checkpoint
``channels.csv``       ``t`` plus one column per channel
``summary.json``       scenario summary
``<table>.csv``        scenario tables (``rescaled``, ``sweep``)
``plots/*.svg``        selected channels against t
``config.toml``        the resolved configuration

Every file carries the config hash and the code version.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__, flow
from ..diagnostics import jsonable
from .config import RunConfig, to_toml
from .plots import line_chart, loglog_fit_chart
from .scenarios import build_initial, get_scenario


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return '"' + " ".join(_fmt(x) for x in v) + '"'
    return str(v)


def write_table(rows, path, meta: dict) -> None:
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    lines = [f"# config_hash={meta['config_hash']}", f"# version={meta['version']}", ",".join(cols)]
    for r in rows:
        lines.append(",".join(_fmt(r.get(k, math.nan)) for k in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def _header(meta):
    return {"config_hash": meta["config_hash"], "version": meta["version"]}


def write_plots(out: Path, trace: flow.FlowTrace, names, tables: dict, summary: dict, meta: dict):
    pdir = out / "plots"
    pdir.mkdir(exist_ok=True)
    t = trace.times
    for n in names:
        if n not in trace.channels:
            continue
        series = {n: (t, trace.channel(n))}
        tol = n + "_tol"
        if tol in trace.channels:
            series[n + " + tol"] = (t, trace.channel(n) + trace.channel(tol))
        line_chart(series, pdir / f"{n}.svg", f"{meta['scenario']}: {n}", "t", n,
                   header=_header(meta))
    rows = tables.get("rescaled")
    if rows:
        tau = [r["tau"] for r in rows]
        line_chart({"D_V": (tau, [r["D_V"] for r in rows])}, pdir / "rescaled_DV.svg",
                   f"{meta['scenario']}: distance of rescaled views", "tau", "D_V",
                   logy=True, header=_header(meta))
        line_chart({"excess": (tau, [r["excess"] for r in rows])}, pdir / "rescaled_excess.svg",
                   f"{meta['scenario']}: excess of rescaled views", "tau", "A",
                   header=_header(meta))
        r = np.array([row["rmin"] for row in rows])
        dt = np.exp(-np.array(tau))
        p = np.polyfit(np.log10(dt), np.log10(r), 1)
        loglog_fit_chart(dt, r, pdir / "rmin_decay.svg", p[0], p[1],
                         f"{meta['scenario']}: neck radius", "T - t", "rmin", header=_header(meta))
    rows = tables.get("sweep")
    if rows:
        d = [row["d"] for row in rows]
        a = [abs(row["A"]) for row in rows]
        p = np.polyfit(np.log10(d), np.log10(a), 1)
        loglog_fit_chart(d, a, pdir / "excess_vs_distance.svg", p[0], p[1],
                         f"{meta['scenario']}: |A| against D_V", "D_V", "|A|", header=_header(meta))


def finish(cfg: RunConfig, trace: flow.FlowTrace, out: Path, initial=None) -> dict:
    """Summaries, tables and plots for a finished trace."""
    sc = get_scenario(cfg.scenario)
    meta = cfg.meta
    initial = build_initial(cfg) if initial is None else initial
    summary, tables = sc.summarize(trace, cfg.params, initial) if sc.summarize else ({}, {})
    summary = {"config_hash": meta["config_hash"], "version": __version__,
               "scenario": cfg.scenario, "n_checkpoints": len(trace.checkpoints),
               "t_final": trace.checkpoints[-1].t, "T_hat": trace.T_hat,
               "events": trace.events, **summary}
    for name, rows in tables.items():
        write_table(rows, out / f"{name}.csv", meta)
    (out / "summary.json").write_text(json.dumps(jsonable(summary), indent=1))
    write_plots(out, trace, cfg.output.get("plots", sc.plots), tables, summary, meta)
    return summary


def failed(trace: flow.FlowTrace) -> Optional[dict]:
    """The engine error event of a trace, if any."""
    for e in trace.events:
        if e["kind"] == "error":
            return e
    return None


def run_config(cfg: RunConfig, out=None, resume_index: Optional[int] = None):
    """Run (or resume) a configured scenario; returns (trace, summary, out_dir)."""
    sc = get_scenario(cfg.scenario)
    out = Path(out if out is not None else cfg.output["dir"])
    initial = build_initial(cfg)
    channels = sc.channels(cfg, initial)
    ctl = cfg.step_control()
    meta = cfg.meta
    if resume_index is not None:
        man = json.loads((out / "manifest.json").read_text())
        if man.get("config_hash") != meta["config_hash"]:
            from ..errors import ConfigError
            raise ConfigError("trace was written with a different configuration", "config_hash")
        trace = flow.resume(out, ctl, channels, resume_index, meta)
    else:
        out.mkdir(parents=True, exist_ok=True)
        for p in (out / "checkpoints").glob("ck_*.json"):
            p.unlink()
        (out / "config.toml").write_text(f"# config_hash={meta['config_hash']}\n"
                                         f"# version={meta['version']}\n" + to_toml(cfg))
        writer = flow.TraceWriter(out, meta)
        trace = flow.run(initial, ctl, channels, on_checkpoint=writer)
        writer.finalize(trace)
    summary = finish(cfg, trace, out, initial)
    return trace, summary, out
