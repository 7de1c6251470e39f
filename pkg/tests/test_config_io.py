import filecmp

import numpy as np
import pytest

from triggerkit import io
from triggerkit.config import bundled_config, load_config, parse_config
from triggerkit.errors import ParseError, ValidationError
from triggerkit.simulator import IntegratorConfig, run
from triggerkit.spectral_model import reference_initial_state, reference_model
from triggerkit.stability_conditions import frontier
from triggerkit.triggering import (EventTriggered, Periodic, PeriodicEvent,
                                   SelfTriggered)

MINIMAL = """\
envelope.gamma = 1.0
envelope.Gamma = 1.92
policy.kind = periodic
policy.h = 0.02
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------- config

def test_bundled_stm_large():
    cfg = load_config("paper_stm_large.cfg")
    pol = cfg.policy
    assert isinstance(pol, SelfTriggered)
    assert (pol.eps, pol.tau_max) == (0.29, 0.5)
    assert pol.L == pytest.approx(np.sqrt(5) * 0.1, rel=1e-15)
    assert cfg.model.N == 200 and cfg.integrator.dt == 1e-4
    assert cfg.envelope().Gamma == 1.92


@pytest.mark.parametrize("name, kind", [
    ("paper_stm_small.cfg", SelfTriggered), ("paper_etm.cfg", EventTriggered),
    ("paper_periodic.cfg", Periodic), ("paper_petc.cfg", PeriodicEvent),
    ("paper_stm_large_taumax1.cfg", SelfTriggered),
])
def test_all_bundled_configs_load(name, kind):
    assert bundled_config(name).is_file()
    assert isinstance(load_config(name).policy, kind)


def test_defaults_applied(tmp_path):
    cfg = load_config(write(tmp_path, MINIMAL))
    assert cfg.model.N == 200
    assert cfg.integrator.dt == 1e-4
    assert cfg.grid_num == 2001
    np.testing.assert_array_equal(cfg.x0.vector(), reference_initial_state(cfg.model).vector())


def test_missing_gamma(tmp_path):
    with pytest.raises(ValidationError, match="envelope.gamma"):
        load_config(write(tmp_path, MINIMAL.replace("envelope.gamma = 1.0\n", "")))


def test_tau_ordering(tmp_path):
    text = MINIMAL.replace("policy.kind = periodic\npolicy.h = 0.02\n",
                           "policy.kind = event_triggered\npolicy.eps = 0.07\npolicy.tau_min = 0.5\npolicy.tau_max = 0.5\n")
    with pytest.raises(ValidationError, match="ordering invariant.*tau_min.*tau_max"):
        load_config(write(tmp_path, text))


def test_gamma_estimated_when_absent(tmp_path):
    cfg = load_config(write(tmp_path, MINIMAL.replace("envelope.Gamma = 1.92\n", "")))
    assert 1.87 <= cfg.envelope().Gamma <= 1.97


@pytest.mark.parametrize("text, line, key", [
    ("envelope.gamma = 1.0\nmodel.bogus = 3\n", 2, "model.bogus"),
    ("# c\nenvelope.gamma 1.0\n", 2, None),
    ("envelope.gamma = 1.0\nenvelope.gamma = 2.0\n", 2, "envelope.gamma"),
    ("model.G = [[1.0\n", 1, "model.G"),
    ("model.N =\n", 1, "model.N"),
])
def test_parse_errors(text, line, key):
    with pytest.raises(ParseError) as exc:
        parse_config(text)
    assert exc.value.line == line and exc.value.key == key
    assert f"line {line}" in str(exc.value)


@pytest.mark.parametrize("extra", [
    "policy.kind = sometimes\n",
    "model.N = 2.5\n",
    "model.b_support = [0.7, 0.2]\n",
    "integrator.dt = 0.1\n",
    "initial.x2 = [1.0, 2.0]\n",
    "check.condition = nope\n",
])
def test_validation_errors(tmp_path, extra):
    base = MINIMAL
    if extra.startswith("policy.kind"):
        base = base.replace("policy.kind = periodic\n", "")
    with pytest.raises(ValidationError):
        load_config(write(tmp_path, base + extra))


def test_missing_file():
    with pytest.raises(ValidationError):
        load_config("does/not/exist.cfg")


# ---------------------------------------------------------------- CSV / SVG

@pytest.fixture(scope="module")
def trace():
    m = reference_model(r1=0.1, r2=0.1)
    return run(m, __import__("triggerkit").DecayEnvelope(1.0, 1.92), EventTriggered(0.07, 0.001, 0.5),
               reference_initial_state(m), IntegratorConfig(t_end=0.5))


def test_trace_roundtrip_bit_exact(tmp_path, trace):
    p = tmp_path / "trace.csv"
    io.write_trace_csv(trace, p)
    t, n, u, ev = io.read_trace_csv(p)
    np.testing.assert_array_equal(t, trace.sample_times)
    np.testing.assert_array_equal(n, trace.state_norms)
    np.testing.assert_array_equal(u, trace.inputs)
    np.testing.assert_array_equal(ev, trace.is_event)
    raw = p.read_bytes()
    assert b"\r" not in raw
    assert raw.split(b"\n")[0] == b"t,state_norm,u_1,is_event"


def test_events_csv(tmp_path, trace):
    p = tmp_path / "events.csv"
    io.write_events_csv(trace, p)
    k, t, gap = io.read_events_csv(p)
    np.testing.assert_array_equal(t, trace.event_times)
    np.testing.assert_array_equal(k, np.arange(t.size))
    assert np.isnan(gap[0])
    np.testing.assert_array_equal(gap[1:], trace.inter_event_times)
    assert p.read_text().splitlines()[0] == "k,t_k,inter_event_time"


def test_seventeen_digits(tmp_path, trace):
    p = tmp_path / "trace.csv"
    io.write_trace_csv(trace, p)
    line = p.read_text().splitlines()[2]
    mant = line.split(",")[0].split("e")[0].replace(".", "").lstrip("0")
    assert len(mant) <= 17


def test_csv_deterministic(tmp_path):
    m = reference_model()
    env = __import__("triggerkit").DecayEnvelope(1.0, 1.92)
    for name in ("a.csv", "b.csv"):
        tr = run(m, env, EventTriggered(0.07, 0.001, 0.5), reference_initial_state(m), IntegratorConfig(t_end=0.3))
        io.write_trace_csv(tr, tmp_path / name)
    assert filecmp.cmp(tmp_path / "a.csv", tmp_path / "b.csv", shallow=False)


def test_frontier_csv(tmp_path):
    m = reference_model()
    env = __import__("triggerkit").DecayEnvelope(1.0, 1.92)
    tab = frontier(m, env, "eps_vs_taumin", {"L": 0.0}, [0.001, 0.002], grid_num=101)
    p = tmp_path / "f.csv"
    io.write_frontier_csv(tab, p)
    rows = p.read_text().splitlines()
    assert rows[0] == "tau_min,eps_bound,bracket_lo,bracket_hi,feasible"
    assert len(rows) == 3 and float(rows[1].split(",")[1]) == tab.rows[0].bound


def test_svg(tmp_path, trace):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    io.write_trace_svg(trace, a)
    io.write_trace_svg(trace, b)
    text = a.read_text()
    assert text.startswith("<?xml") and 'version="1.1"' in text and "<path" in text
    assert filecmp.cmp(a, b, shallow=False)
