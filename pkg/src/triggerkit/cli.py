"""Command line entry point: ``triggerkit <command> <config> [--out DIR] [--seed-grid N] [--svg]``.

Exit codes: 0 success or condition satisfied, 1 condition violated,
2 usage or configuration error, 3 numerical failure.  Failures are
reported as one line on stderr::

    error exit=2 type=ValidationError message="..."
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import load_config
from .errors import NumericalError, ParseError, ValidationError
from .operator_calculus import gamma_estimate
from .simulator import decay_fit, run
from .spectral_model import SpectralState
from .stability_conditions import (check_etc_linear, check_etc_nonlinear,
                                   check_periodic, check_petc, check_stm,
                                   frontier, theta_bound)
from .triggering import (EventTriggered, Periodic, PeriodicEvent,
                         SelfTriggered, SelfTriggerPlanner)

__all__ = ["main", "dispatch", "COMMANDS"]

COMMANDS = ("simulate", "check", "frontier", "bounds", "gamma-estimate")

EXIT_OK, EXIT_VIOLATED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

_DEFAULT_CONDITION = {
    SelfTriggered: "stm",
    EventTriggered: "etc",
    PeriodicEvent: "petc_bounded",
    Periodic: "periodic",
}

_DEFAULT_TARGET = {
    SelfTriggered: "max_taumax_stm",
    EventTriggered: "eps_vs_taumin",
    PeriodicEvent: "eps_vs_h_petc",
    Periodic: "max_h_periodic",
}

_WORST_CASE_SAMPLES = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser():
    p = _Parser(prog="triggerkit", description="Certify and simulate sampled-data control of the heat/ODE cascade.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", help="configuration file (or the name of a bundled one)")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--seed-grid", type=int, default=None, metavar="N",
                   help="uniform grid density for sup-over-interval quantities (overrides grid.num)")
    p.add_argument("--svg", action="store_true", help="also write an SVG plot (simulate)")
    return p


def _emit(lines, out):
    for line in lines:
        print(line, file=out)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _check_report(cfg, env, grid_num):
    model, pol = cfg.model, cfg.policy
    cond = cfg.check.get("condition") or _DEFAULT_CONDITION[type(pol)]
    L = cfg.L
    if cond == "etc":
        cond = "etc_linear" if model.nonlin.trivial else "etc_nonlinear"
    if cond == "stm":
        _need(pol, SelfTriggered, cond)
        return check_stm(env, model.norm_B, pol.L, pol.eps, pol.tau_max)
    if cond == "etc_linear":
        _need(pol, EventTriggered, cond)
        return check_etc_linear(model, env, pol.eps, pol.tau_min, grid_num)
    if cond == "etc_nonlinear":
        _need(pol, EventTriggered, cond)
        return check_etc_nonlinear(model, env, L, pol.eps, pol.tau_min, pol.tau_max,
                                   sigma=cfg.check.get("sigma"), grid_num=grid_num)
    if cond == "petc_bounded":
        _need(pol, PeriodicEvent, cond)
        return check_petc("bounded", L, pol.eps, pol.h, model, env, grid_num=grid_num)
    if cond == "petc_power_stable":
        _need(pol, PeriodicEvent, cond)
        return check_petc("power_stable", L, pol.eps, pol.h, model, env,
                          Omega=cfg.check.get("Omega"), omega=cfg.check.get("omega"), grid_num=grid_num)
    h = pol.h if isinstance(pol, (Periodic, PeriodicEvent)) else None
    if h is None:
        raise ValidationError("check.condition = periodic needs a policy with a period h")
    return check_periodic(model, env, h, grid_num)


def _need(policy, cls, cond):
    if not isinstance(policy, cls):
        raise ValidationError(f"check.condition = {cond} needs policy.kind = {cls.kind}, got {policy.kind}")


def _frontier_grid(fr):
    if fr.get("grid") is not None:
        return np.asarray(fr["grid"], dtype=float)
    keys = [fr.get(k) for k in ("start", "stop", "num")]
    if all(k is None for k in keys):
        return None
    if any(k is None for k in keys):
        raise ValidationError("frontier.start, frontier.stop and frontier.num must be given together")
    return np.linspace(float(keys[0]), float(keys[1]), int(keys[2]))


def _cmd_simulate(cfg, env, args, out):
    outdir = Path(args.out)
    trace = run(cfg.model, env, cfg.policy, cfg.x0, cfg.integrator, cfg.march)
    tpath = outdir / cfg.outputs["trace_csv"]
    epath = outdir / cfg.outputs["events_csv"]
    io.write_trace_csv(trace, tpath)
    io.write_events_csv(trace, epath)
    gaps = trace.inter_event_times
    lines = [f"trace_csv = {tpath}", f"events_csv = {epath}",
             f"events = {int(trace.is_event.sum())}",
             f"min_inter_event_time = {_fmt(gaps.min()) if gaps.size else 'nan'}",
             f"max_inter_event_time = {_fmt(gaps.max()) if gaps.size else 'nan'}",
             f"final_state_norm = {_fmt(trace.state_norms[-1])}"]
    try:
        Gfit, gfit = decay_fit(trace)
        lines += [f"decay_fit.Gamma = {_fmt(Gfit)}", f"decay_fit.gamma = {_fmt(gfit)}"]
    except NumericalError:
        lines.append("decay_fit = unavailable")
    if args.svg:
        spath = outdir / cfg.outputs["svg"]
        io.write_trace_svg(trace, spath, title=cfg.policy.kind)
        lines.append(f"svg = {spath}")
    _emit(lines, out)
    return EXIT_OK


def _cmd_check(cfg, env, args, out, grid_num):
    rep = _check_report(cfg, env, grid_num)
    _emit(rep.lines(), out)
    return EXIT_OK if rep.satisfied else EXIT_VIOLATED


def _cmd_frontier(cfg, env, args, out, grid_num):
    fr = cfg.frontier
    target = fr.get("target") or _DEFAULT_TARGET[type(cfg.policy)]
    fixed = {"L": cfg.L if fr.get("L") is None else float(fr["L"])}
    pol = cfg.policy
    if fr.get("tau_max") is not None:
        fixed["tau_max"] = float(fr["tau_max"])
    elif hasattr(pol, "tau_max"):
        fixed["tau_max"] = pol.tau_max
    if fr.get("eps") is not None:
        fixed["eps"] = float(fr["eps"])
    elif hasattr(pol, "eps"):
        fixed["eps"] = pol.eps
    if target == "max_taumax_stm" and isinstance(pol, SelfTriggered) and fr.get("L") is None:
        fixed["L"] = pol.L
    table = frontier(cfg.model, env, target, fixed, _frontier_grid(fr), grid_num=grid_num)
    path = Path(args.out) / cfg.outputs["frontier_csv"]
    io.write_frontier_csv(table, path)
    lines = [f"frontier_csv = {path}", f"target = {table.target}", f"rows = {len(table.rows)}",
             f"monotone = {table.monotone}"]
    lines += [f"{table.abscissa_name} = {_fmt(r.abscissa)}, {table.bound_name} = {_fmt(r.bound)}"
              for r in table.rows]
    _emit(lines, out)
    return EXIT_OK


def _cmd_bounds(cfg, env, args, out):
    pol = cfg.policy
    if not isinstance(pol, SelfTriggered):
        raise ValidationError(f"bounds needs policy.kind = self_triggered, got {pol.kind}")
    theta = theta_bound(cfg.model, env, pol.L, pol.eps, march=cfg.march)
    planner = SelfTriggerPlanner(cfg.model, env, pol, cfg.march)
    tau0 = planner.next_interval(cfg.x0)
    rng = np.random.default_rng(0)
    taus = []
    for _ in range(_WORST_CASE_SAMPLES):
        v = rng.standard_normal(cfg.model.dim)
        taus.append(planner.next_interval(SpectralState.from_vector(v / np.linalg.norm(v), cfg.model.p)))
    taus = np.asarray(taus)
    lines = [f"theta = {_fmt(theta)}",
             f"next_interval.x0 = {_fmt(tau0)}",
             f"next_interval.samples = {_WORST_CASE_SAMPLES}",
             f"next_interval.min = {_fmt(taus.min())}",
             f"next_interval.max = {_fmt(taus.max())}",
             f"next_interval.min_minus_theta = {_fmt(min(taus.min(), tau0) - theta)}"]
    _emit(lines, out)
    return EXIT_OK


def _cmd_gamma(cfg, args, out):
    env = gamma_estimate(cfg.model, cfg.gamma)
    _emit([f"{f.name} = {_fmt(getattr(env, f.name))}" for f in dataclasses.fields(env)], out)
    return EXIT_OK


def dispatch(command, cfg, args, out=sys.stdout):
    """Run ``command`` for a loaded configuration and return the exit code."""
    if command == "gamma-estimate":
        return _cmd_gamma(cfg, args, out)
    grid_num = args.seed_grid if args.seed_grid is not None else cfg.grid_num
    env = cfg.envelope()
    if command == "simulate":
        return _cmd_simulate(cfg, env, args, out)
    if command == "check":
        return _cmd_check(cfg, env, args, out, grid_num)
    if command == "frontier":
        return _cmd_frontier(cfg, env, args, out, grid_num)
    return _cmd_bounds(cfg, env, args, out)


def _fail(code, exc, err):
    msg = str(exc).replace("\n", " ")
    print(f"error exit={code} type={type(exc).__name__} message={json.dumps(msg)}", file=err)
    return code


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = _parser().parse_args(argv)
        if args.seed_grid is not None and args.seed_grid < 3:
            raise UsageError("--seed-grid must be at least 3")
        cfg = load_config(args.config)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return dispatch(args.command, cfg, args, out)
    except (UsageError, ParseError, ValidationError, OSError) as exc:
        return _fail(EXIT_CONFIG, exc, err)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc, err)
    except Exception as exc:  # noqa: BLE001 - any other module failure
        return _fail(EXIT_NUMERICAL, exc, err)


if __name__ == "__main__":
    sys.exit(main())
