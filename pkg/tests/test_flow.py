import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmcflab import flow, geom
from lmcflab import surface as sf
from lmcflab.errors import CFLViolation, OutOfRange


def test_step_control_validates_cfl():
    with pytest.raises(CFLViolation):
        flow.StepControl(cfl=0.0)
    with pytest.raises(CFLViolation):
        flow.StepControl(cfl=0.9)


def test_plane_mesh_is_static():
    m = sf.plane_mesh(geom.real_plane(), 2.0, 11)
    tr = flow.run(m, flow.StepControl(t_max=0.05, checkpoint_dt=0.025))
    assert np.abs(tr.checkpoints[-1].state.vertices - m.vertices).max() < 1e-13
    tr.check()


def test_circle_product_shrinks():
    c = sf.CurveProduct(sf.circle(1.0, 64), sf.circle(1.0, 64))
    tr = flow.run(c, flow.StepControl(t_max=0.1, checkpoint_dt=0.05))
    s = tr.checkpoints[-1].state
    r2 = np.mean(np.abs(s.gamma1)) ** 2
    assert r2 == pytest.approx(1 - 2 * 0.1, rel=5e-3)


def test_potential_graph_over_rotated_plane_is_static():
    g = sf.cartesian_graph(geom.rotated_real_plane(0.2), lambda x, y: 0 * x, 2.0, 11)
    tr = flow.run(g, flow.StepControl(t_max=0.02, checkpoint_dt=0.01))
    # f_t = theta: the potential gains the constant 0.2 t, the surface does not move
    f = tr.checkpoints[-1].state.f
    assert np.abs(f - 0.2 * 0.02).max() < 1e-14
    assert np.abs(sf.embed(tr.checkpoints[-1].state).x - sf.embed(g).x).max() < 1e-14


def test_channels_aligned_with_checkpoints():
    c = sf.CurveProduct(sf.circle(1.0, 32), sf.circle(1.0, 32))
    tr = flow.run(c, flow.StepControl(t_max=0.06, checkpoint_dt=0.02),
                  {"r1": lambda s, t: float(np.mean(np.abs(s.gamma1)))})
    assert len(tr.channel("r1")) == len(tr.checkpoints)
    assert np.all(np.diff(tr.channel("r1")) < 0)
    assert np.all(np.diff(tr.times) > 0)


def test_pinch_is_detected_and_estimated():
    c = sf.CurveProduct(sf.circle(0.5, 48), sf.circle(1.0, 48))
    tr = flow.run(c, flow.StepControl(t_max=1.0, checkpoint_dt=0.05, stop_gauge=0.05))
    assert tr.has_event("pinch-detected") or tr.T_hat is not None
    assert tr.T_hat == pytest.approx(0.125, abs=2e-3)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 5.0))
def test_scale_state_scales_positions(lam):
    c = sf.CurveProduct(sf.circle(1.0, 16), sf.circle(2.0, 16))
    s = flow.scale_state(c, lam)
    assert np.allclose(np.abs(s.gamma1), lam)
    p = sf.sector_profile(0.5, 0.4, 8.0, 51)
    assert flow.scale_state(p, lam).rmin == pytest.approx(lam * p.rmin)


def test_scale_state_profile_needs_origin():
    with pytest.raises(OutOfRange):
        flow.scale_state(sf.sector_profile(0.5, 0.4, 8.0, 51), 2.0, [1.0, 0, 0, 0])


def test_tau_and_state_at():
    c = sf.CurveProduct(sf.circle(1.0, 32), sf.circle(1.0, 32))
    tr = flow.run(c, flow.StepControl(t_max=0.04, checkpoint_dt=0.02))
    assert flow.tau_of(0.5 - math.exp(-2.0), 0.5) == pytest.approx(2.0)
    mid = flow.state_at(tr, 0.01)
    r = np.mean(np.abs(mid.gamma1))
    assert np.mean(np.abs(tr.checkpoints[1].state.gamma1)) < r < 1.0
    with pytest.raises(OutOfRange):
        flow.state_at(tr, 1.0)


def test_rerun_is_deterministic():
    def go():
        c = sf.CurveProduct(sf.circle(1.0, 32) * (1 + 0.05 * np.cos(3 * np.arange(32))),
                            sf.circle(1.0, 32))
        return flow.run(c, flow.StepControl(t_max=0.05, checkpoint_dt=0.025))

    a, b = go(), go()
    assert np.array_equal(a.checkpoints[-1].state.gamma1, b.checkpoints[-1].state.gamma1)


def test_writer_load_and_resume(tmp_path):
    ctl = flow.StepControl(t_max=0.06, checkpoint_dt=0.02)
    ch = {"r": lambda s, t: float(np.mean(np.abs(s.gamma1)))}
    c = sf.CurveProduct(sf.circle(1.0, 32), sf.circle(1.0, 32))
    w = flow.TraceWriter(tmp_path / "a", {"config_hash": "x", "version": "0"})
    tr = flow.run(c, ctl, ch, on_checkpoint=w)
    w.finalize(tr)
    back = flow.load_trace(tmp_path / "a")
    assert np.array_equal(back.times, tr.times)
    assert np.array_equal(back.checkpoints[-1].state.gamma1, tr.checkpoints[-1].state.gamma1)
    csv_before = (tmp_path / "a" / "channels.csv").read_bytes()
    res = flow.resume(tmp_path / "a", ctl, ch, 1, {"config_hash": "x", "version": "0"})
    assert np.array_equal(res.checkpoints[-1].state.gamma1, tr.checkpoints[-1].state.gamma1)
    assert (tmp_path / "a" / "channels.csv").read_bytes() == csv_before


def test_lawlor_mesh_nearly_static():
    m = sf.lawlor_mesh(geom.canonical_pair(), 0.2, 3.0, 32)
    tr = flow.run(m, flow.StepControl(t_max=0.02, checkpoint_dt=0.02))
    d = np.abs(tr.checkpoints[-1].state.vertices - m.vertices).max()
    assert d <= 5 * m.h ** 2
