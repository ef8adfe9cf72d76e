"""Scenario configuration files.

A configuration is a TOML document::

    scenario = "S3"          # required, see ``lmcflab list-scenarios``
    seed = 0                 # optional, feeds every random perturbation

    [params]                 # scenario parameters (defaults per scenario)
    radii = [1.0, 1.0]

    [control]                # StepControl fields
    t_max = 0.6

    [monitor]                # centre of the Huisken/excess channels
    x0 = [0.0, 0.0, 0.0, 0.0]
    t0 = 0.5

    [output]
    dir = "runs/s3"
    plots = ["huisken", "excess"]

Unknown keys and type mismatches raise :class:`ConfigError` carrying the
offending field and, where it can be located, the line number.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .. import __version__
from ..errors import ConfigError
from ..flow import StepControl

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

TOP_KEYS = ("scenario", "seed", "params", "control", "monitor", "output")
MONITOR_KEYS = ("x0", "t0", "alpha", "C1")
OUTPUT_KEYS = ("dir", "plots")


@dataclass
class RunConfig:
    scenario: str
    seed: int
    params: dict
    control: dict
    monitor: dict
    output: dict = field(default_factory=dict)
    source: Optional[str] = None

    def resolved(self) -> dict:
        """Everything that influences the numbers (output location excluded)."""
        return {"scenario": self.scenario, "seed": self.seed, "params": self.params,
                "control": self.control, "monitor": self.monitor}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def meta(self) -> dict:
        return {"config_hash": self.config_hash, "version": __version__,
                "scenario": self.scenario, "config": self.resolved()}

    def step_control(self) -> StepControl:
        return StepControl(**self.control)


def _line_of(text: Optional[str], key: str, section: Optional[str] = None) -> Optional[int]:
    if not text:
        return None
    in_section = section is None
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i, ln in enumerate(text.splitlines(), 1):
        s = ln.strip()
        if s.startswith("["):
            in_section = section is not None and s.strip("[] ") == section
            if section is None:
                in_section = False
            continue
        if in_section and pat.match(ln):
            return i
    return None


def _section_line(text: Optional[str], section: str) -> Optional[int]:
    if not text:
        return None
    for i, ln in enumerate(text.splitlines(), 1):
        if ln.strip().strip("[] ") == section and ln.strip().startswith("["):
            return i
    return None


def _coerce(value, default, fld: str, line: Optional[int]):
    """Check ``value`` against the type of ``default``; ints widen to floats."""
    if default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", fld, line)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", fld, line)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", fld, line)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", fld, line)
        return value
    if isinstance(default, (list, tuple)):
        if not isinstance(value, list):
            raise ConfigError(f"expected an array, got {value!r}", fld, line)
        if default and len(value) != len(default) and not isinstance(default[0], (list, str)):
            raise ConfigError(f"expected {len(default)} entries, got {len(value)}", fld, line)
        if default and isinstance(default[0], float):
            return [_coerce(v, default[0], fld, line) for v in value]
        return value
    return value


def _merge_section(given: dict, defaults: dict, section: str, text: Optional[str]) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        line = _line_of(text, k, section)
        if k not in defaults:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(defaults))})",
                              f"{section}.{k}", line)
        out[k] = _coerce(v, defaults[k], f"{section}.{k}", line)
    return out


def parse_config(text: str, source: Optional[str] = None) -> RunConfig:
    """Parse and validate a configuration document."""
    from .scenarios import get_scenario

    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", None, int(m.group(1)) if m else None) from None
    for k in doc:
        if k not in TOP_KEYS:
            raise ConfigError(f"unknown top-level key (allowed: {', '.join(TOP_KEYS)})", k,
                              _line_of(text, k) or _section_line(text, k))
    if "scenario" not in doc:
        raise ConfigError("missing required key", "scenario", None)
    name = doc["scenario"]
    if not isinstance(name, str):
        raise ConfigError("expected a string", "scenario", _line_of(text, "scenario"))
    try:
        sc = get_scenario(name)
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}", "scenario", _line_of(text, "scenario")) from None
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer", "seed", _line_of(text, "seed"))
    for sec in ("params", "control", "monitor", "output"):
        if sec in doc and not isinstance(doc[sec], dict):
            raise ConfigError("expected a table", sec, _line_of(text, sec))
    params = _merge_section(doc.get("params", {}), sc.params, "params", text)
    control = _merge_section(doc.get("control", {}), sc.control_defaults(), "control", text)
    monitor = _merge_section(doc.get("monitor", {}), sc.monitor, "monitor", text)
    output = _merge_section(doc.get("output", {}), {"dir": f"runs/{sc.name.lower()}",
                                                    "plots": list(sc.plots)}, "output", text)
    try:
        StepControl(**control)
    except Exception as exc:  # CFLViolation and friends
        raise ConfigError(str(exc), "control.cfl", _line_of(text, "cfl", "control")) from None
    if len(monitor["x0"]) != 4:
        raise ConfigError("x0 needs 4 coordinates", "monitor.x0", _line_of(text, "x0", "monitor"))
    sc.validate(params, text)
    return RunConfig(sc.name, seed, params, control, monitor, output, source)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, str(p))


def default_config(name: str, **overrides) -> RunConfig:
    """Configuration with scenario defaults; ``overrides`` keyed by section."""
    from .scenarios import get_scenario

    sc = get_scenario(name)
    params = {**copy.deepcopy(sc.params), **overrides.get("params", {})}
    control = {**sc.control_defaults(), **overrides.get("control", {})}
    monitor = {**copy.deepcopy(sc.monitor), **overrides.get("monitor", {})}
    output = {"dir": f"runs/{sc.name.lower()}", "plots": list(sc.plots), **overrides.get("output", {})}
    return RunConfig(sc.name, overrides.get("seed", 0), params, control, monitor, output)


def to_toml(cfg: RunConfig) -> str:
    """Write a configuration back as TOML (scalars and flat arrays only)."""
    def val(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, float):
            return repr(v) if v == v and abs(v) != float("inf") else ("nan" if v != v else
                                                                      ("inf" if v > 0 else "-inf"))
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(val(x) for x in v) + "]"
        if v is None:
            raise ConfigError("None is not representable in TOML")
        return str(v)

    lines = [f"scenario = {val(cfg.scenario)}", f"seed = {cfg.seed}", ""]
    for sec in ("params", "control", "monitor", "output"):
        items = {k: v for k, v in getattr(cfg, sec).items() if v is not None}
        lines.append(f"[{sec}]")
        lines += [f"{k} = {val(v)}" for k, v in items.items()]
        lines.append("")
    return "\n".join(lines)
