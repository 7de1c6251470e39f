import io as _io
import json
import re

import pytest

from triggerkit.cli import main

ERR = re.compile(r'^error exit=(\d) type=(\w+) message=(".*")$')


def call(*argv):
    out, err = _io.StringIO(), _io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def kv(text):
    return dict(line.split(" = ", 1) for line in text.splitlines() if " = " in line)


def test_check_stm_large_satisfied():
    code, out, _ = call("check", "paper_stm_large.cfg")
    assert code == 0
    d = kv(out)
    assert d["condition"] == "STM_thm26" and float(d["margin"]) > 0


def test_check_taumax_one_violated():
    code, out, _ = call("check", "paper_stm_large_taumax1.cfg")
    assert code == 1 and float(kv(out)["margin"]) < 0


def test_frontier_etm(tmp_path):
    code, out, _ = call("frontier", "paper_etm.cfg", "--out", str(tmp_path))
    assert code == 0
    rows = (tmp_path / "frontier.csv").read_text().splitlines()
    assert len(rows) == 11
    bounds = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:]))
    assert kv(out)["monotone"] == "nonincreasing"


def test_seed_grid_override(tmp_path):
    code, out, _ = call("check", "paper_etm.cfg", "--seed-grid", "11")
    assert code == 0
    code, _, err = call("check", "paper_etm.cfg", "--seed-grid", "1")
    assert code == 2 and ERR.match(err.strip())


def test_simulate_with_svg(tmp_path):
    cfg = tmp_path / "short.cfg"
    text = (pytest.importorskip("triggerkit.config").bundled_config("paper_etm.cfg").read_text()
            .replace("integrator.t_end = 10.0", "integrator.t_end = 0.5"))
    cfg.write_text(text)
    code, out, _ = call("simulate", str(cfg), "--out", str(tmp_path / "o"), "--svg")
    assert code == 0
    for f in ("trace.csv", "events.csv", "trace.svg"):
        assert (tmp_path / "o" / f).is_file()
    assert int(kv(out)["events"]) >= 1


def test_bounds():
    code, out, _ = call("bounds", "paper_stm_small.cfg")
    assert code == 0
    d = kv(out)
    assert 0.0140 <= float(d["theta"]) <= 0.0154
    assert float(d["next_interval.min_minus_theta"]) >= 0


def test_gamma_estimate():
    code, out, _ = call("gamma-estimate", "paper_periodic.cfg")
    assert code == 0
    assert 1.87 <= float(kv(out)["Gamma"]) <= 1.97


def test_config_error_single_line(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("policy.kind = periodic\npolicy.h = 0.1\n")
    code, out, err = call("check", str(bad))
    assert code == 2 and out == ""
    lines = err.strip().splitlines()
    assert len(lines) == 1
    m = ERR.match(lines[0])
    assert m and m.group(2) == "ValidationError" and "gamma" in json.loads(m.group(3))


def test_parse_error_exit(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("model.nope = 1\n")
    code, _, err = call("check", str(bad))
    assert code == 2 and "ParseError" in err and "line 1" in err


def test_usage_error():
    code, _, err = call("explode", "paper_etm.cfg")
    assert code == 2 and ERR.match(err.strip())


def test_numerical_failure_exit(tmp_path):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("envelope.gamma = 100.0\npolicy.kind = periodic\npolicy.h = 0.01\n")
    code, _, err = call("gamma-estimate", str(cfg))
    assert code == 3
    assert ERR.match(err.strip()).group(2) == "SpectralAbscissaTooLarge"


def test_bounds_needs_stm():
    code, _, err = call("bounds", "paper_etm.cfg")
    assert code == 2 and "self_triggered" in err
