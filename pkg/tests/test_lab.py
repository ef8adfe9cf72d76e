import json
import subprocess
import sys

import numpy as np
import pytest

from lmcflab.errors import ConfigError
from lmcflab.lab import config, scenarios
from lmcflab.lab.runner import run_config


def cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "lmcflab", *args], cwd=cwd,
                          capture_output=True, text=True, timeout=600)


SMALL_S1 = """scenario = "S1"
seed = 3
[params]
n = 21
[control]
t_max = 0.04
checkpoint_dt = 0.02
"""


def test_parse_and_defaults():
    cfg = config.parse_config(SMALL_S1)
    assert cfg.scenario == "S1" and cfg.seed == 3
    assert cfg.params["n"] == 21 and cfg.params["extent"] == 6
    assert cfg.step_control().t_max == 0.04


def test_hash_is_stable_and_sensitive():
    a = config.parse_config(SMALL_S1)
    b = config.parse_config(SMALL_S1.replace("seed = 3", "seed  =  3"))
    c = config.parse_config(SMALL_S1.replace("n = 21", "n = 23"))
    assert a.config_hash == b.config_hash != c.config_hash
    assert len(a.config_hash) == 16


def test_toml_roundtrip():
    cfg = config.default_config("S6", params={"delta": 0.07})
    back = config.parse_config(config.to_toml(cfg))
    assert back.config_hash == cfg.config_hash


@pytest.mark.parametrize("text,fld,line", [
    ('scenario = "S1"\n[control]\nt_maxx = 1.0\n', "control.t_maxx", 3),
    ('scenario = "S1"\n[params]\nn = "many"\n', "params.n", 3),
    ('scenario = "S1"\ncolour = 1\n', "colour", 2),
    ('scenario = "S99"\n', "scenario", 1),
])
def test_config_errors_carry_field_and_line(text, fld, line):
    with pytest.raises(ConfigError) as e:
        config.parse_config(text)
    assert e.value.field == fld
    assert e.value.line == line


def test_invalid_toml_is_config_error():
    with pytest.raises(ConfigError):
        config.parse_config("scenario = \n")


def test_registry():
    names = [s.name for s in scenarios.list_scenarios()]
    assert names == [f"S{k}" for k in range(1, 8)]
    assert scenarios.get_scenario("lawlor-pinch").name == "S4"
    with pytest.raises(KeyError):
        scenarios.get_scenario("nope")


@pytest.mark.parametrize("name", ["S6", "S7"])
def test_initial_states_are_seeded(name):
    from lmcflab import surface as sf

    def x(seed):
        return sf.embed(scenarios.build_initial(config.default_config(name, seed=seed))).x

    assert np.array_equal(x(1), x(1))
    assert not np.array_equal(x(1), x(2))


def test_run_writes_hash_everywhere(tmp_path):
    cfg = config.parse_config(SMALL_S1)
    trace, summary, out = run_config(cfg, tmp_path / "run")
    h = cfg.config_hash
    assert summary["config_hash"] == h
    assert json.loads((out / "manifest.json").read_text())["config_hash"] == h
    for p in list(out.glob("*.csv")) + [out / "config.toml"]:
        assert f"config_hash={h}" in p.read_text().splitlines()[0]
    for p in (out / "plots").glob("*.svg"):
        assert f"config_hash={h}" in p.read_text()
    assert summary["max_displacement"] < 1e-12


def test_cli_list_scenarios():
    r = cli("list-scenarios")
    assert r.returncode == 0 and "lawlor-pinch" in r.stdout


def test_cli_run_diag_and_exit_codes(tmp_path):
    (tmp_path / "s1.toml").write_text(SMALL_S1 + '[output]\ndir = "out"\n')
    r = cli("run", "s1.toml", cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    r = cli("diag", "out", "--samples", cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    rep = json.loads(r.stdout)
    assert rep["excess"] == pytest.approx(-4 * np.pi, abs=0.01)
    assert list((tmp_path / "out" / "diag").glob("*_samples.csv"))
    r = cli("diag", "out", "--t0", "0.5", "--tau", "0.7", "0.71", cwd=tmp_path)
    assert r.returncode == 0 and (tmp_path / "out" / "diag" / "tau_sweep.csv").exists()

    (tmp_path / "bad.toml").write_text('scenario = "S1"\n[control]\nt_maxx = 1\n')
    r = cli("run", "bad.toml", cwd=tmp_path)
    assert r.returncode == 2 and "line 3" in r.stderr

    (tmp_path / "blow.toml").write_text(SMALL_S1 + "blowup_guard = 1.0\n" + '[output]\ndir = "b"\n')
    r = cli("run", "blow.toml", cwd=tmp_path)
    assert r.returncode == 3
    assert (tmp_path / "b" / "manifest.json").exists()


def test_cli_resume_reproduces(tmp_path):
    (tmp_path / "s3.toml").write_text('scenario = "S3"\n[params]\nn = 32\n[control]\n'
                                      't_max = 0.1\ncheckpoint_dt = 0.02\n[output]\ndir = "o"\n')
    assert cli("run", "s3.toml", cwd=tmp_path).returncode == 0
    before = (tmp_path / "o" / "channels.csv").read_bytes()
    assert cli("run", "s3.toml", "--resume", "2", cwd=tmp_path).returncode == 0
    assert (tmp_path / "o" / "channels.csv").read_bytes() == before


def test_cli_verify_and_unknown_suite(tmp_path):
    r = cli("verify", "three-annulus", "--json", str(tmp_path / "r.json"))
    assert r.returncode == 0, r.stdout
    assert json.loads((tmp_path / "r.json").read_text())["passed"]
    assert cli("verify", "nope").returncode == 2


def test_cli_thread_env(tmp_path):
    code = ("import os, sys; from lmcflab import cli; cli._apply_threads(); "
            "print(os.environ['OMP_NUM_THREADS'])")
    env = {"LMCFLAB_THREADS": "3", "PATH": "/usr/bin:/bin"}
    r = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert r.stdout.strip() == "3"
