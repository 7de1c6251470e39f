"""Flat ``section.key = value`` configuration files.

Blank lines and lines starting with ``#`` are ignored.  Values are read as
JSON when possible (numbers, lists, ``true``/``false``, quoted strings) and
as bare strings otherwise.  Unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .operator_calculus import DEFAULT_GRID, DecayEnvelope, gamma_estimate
from .spectral_model import (CascadeModel, NonlinearitySpec, SpectralState,
                             lipschitz_constant)
from .simulator import IntegratorConfig
from .triggering import EventTriggered, Periodic, PeriodicEvent, SelfTriggered

__all__ = ["RunConfig", "load_config", "parse_config", "bundled_config"]

_DEFAULTS = {
    "model.G": [[1.0]],
    "model.H": [[1.0]],
    "model.F1": [-4.0],
    "model.F2": [[-5.0]],
    "model.b_support": [0.4, 0.6],
    "model.b_gain": 5.0,
    "model.N": 200,
    "model.r1": 0.0,
    "model.r2": 0.0,
    "model.theta": 0.5,
    "model.bcoef": None,
    "envelope.gamma": None,
    "envelope.Gamma": None,
    "policy.kind": None,
    "policy.eps": None,
    "policy.tau_max": None,
    "policy.tau_min": None,
    "policy.h": None,
    "policy.l_max": None,
    "policy.L": None,
    "integrator.dt": 1e-4,
    "integrator.event_tol": 1e-9,
    "integrator.t_end": 10.0,
    "initial.a0": 2.0,
    "initial.x2": [-2.0],
    "outputs.trace_csv": "trace.csv",
    "outputs.events_csv": "events.csv",
    "outputs.svg": "trace.svg",
    "outputs.frontier_csv": "frontier.csv",
    "grid.num": DEFAULT_GRID,
    "grid.march": 1000,
    "check.condition": None,
    "check.sigma": None,
    "check.Omega": None,
    "check.omega": None,
    "frontier.target": None,
    "frontier.grid": None,
    "frontier.start": None,
    "frontier.stop": None,
    "frontier.num": None,
    "frontier.L": None,
    "frontier.tau_max": None,
    "frontier.eps": None,
}

_POLICY_KEYS = {
    "self_triggered": ("eps", "tau_max"),
    "event_triggered": ("eps", "tau_min", "tau_max"),
    "periodic_event": ("eps", "h", "l_max"),
    "periodic": ("h",),
}

CONDITIONS = ("stm", "etc_linear", "etc_nonlinear", "petc_bounded", "petc_power_stable", "periodic")


def _parse_value(text, line, key):
    text = text.strip()
    if text == "":
        raise ParseError("empty value", line, key)
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if text[0] in "[{\"":
        raise ParseError(f"malformed value {text!r}", line, key)
    return text


def parse_config(text, source="<string>"):
    """Parse configuration text into a flat dict of raw values."""
    raw = {}
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ParseError(f"expected 'key = value', got {s!r}", i)
        key, val = s.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError("missing key", i)
        if key not in _DEFAULTS:
            raise ParseError(f"unknown key in {source}", i, key)
        if key in raw:
            raise ParseError("duplicate key", i, key)
        raw[key] = _parse_value(val, i, key)
    return raw


@dataclass(frozen=True, eq=False)
class RunConfig:
    model: CascadeModel
    gamma: float
    Gamma: float | None
    policy: object
    integrator: IntegratorConfig
    x0: SpectralState
    outputs: dict
    check: dict = field(default_factory=dict)
    frontier: dict = field(default_factory=dict)
    grid_num: int = DEFAULT_GRID
    march: int = 1000
    source: str = ""

    def envelope(self):
        """The configured envelope; ``Gamma`` is estimated when not given."""
        if self.Gamma is not None:
            return DecayEnvelope(self.gamma, self.Gamma)
        return gamma_estimate(self.model, self.gamma)

    @property
    def L(self):
        return lipschitz_constant(self.model)


def _num(v, key, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{key} must be a number, got {v!r}")
    if integer:
        if float(v) != int(v):
            raise ValidationError(f"{key} must be an integer, got {v!r}")
        return int(v)
    return float(v)


def _build(raw, source):
    cfg = dict(_DEFAULTS)
    cfg.update(raw)
    try:
        nonlin = NonlinearitySpec(_num(cfg["model.r1"], "model.r1"), _num(cfg["model.r2"], "model.r2"),
                                  _num(cfg["model.theta"], "model.theta"))
        model = CascadeModel(
            G=cfg["model.G"], H=cfg["model.H"], F1=cfg["model.F1"], F2=cfg["model.F2"],
            b_support=tuple(cfg["model.b_support"]), b_gain=_num(cfg["model.b_gain"], "model.b_gain"),
            N=_num(cfg["model.N"], "model.N", integer=True), nonlin=nonlin, bcoef=cfg["model.bcoef"])
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid model: {exc}") from None

    if cfg["envelope.gamma"] is None:
        raise ValidationError("envelope.gamma is required")
    gamma = _num(cfg["envelope.gamma"], "envelope.gamma")
    if not gamma > 0:
        raise ValidationError(f"envelope.gamma must be positive, got {gamma}")
    Gamma = cfg["envelope.Gamma"]
    if Gamma is not None:
        Gamma = _num(Gamma, "envelope.Gamma")
        DecayEnvelope(gamma, Gamma)

    kind = cfg["policy.kind"]
    if kind is None:
        raise ValidationError("policy.kind is required")
    if kind not in _POLICY_KEYS:
        raise ValidationError(f"policy.kind must be one of {tuple(_POLICY_KEYS)}, got {kind!r}")
    for k in _POLICY_KEYS[kind]:
        if cfg[f"policy.{k}"] is None:
            raise ValidationError(f"policy.{k} is required for policy.kind = {kind}")
    P = {k: cfg[f"policy.{k}"] for k in ("eps", "tau_max", "tau_min", "h", "l_max", "L")}
    if kind == "self_triggered":
        L = lipschitz_constant(model) if P["L"] is None else _num(P["L"], "policy.L")
        policy = SelfTriggered(_num(P["eps"], "policy.eps"), _num(P["tau_max"], "policy.tau_max"), L)
    elif kind == "event_triggered":
        tmin, tmax = _num(P["tau_min"], "policy.tau_min"), _num(P["tau_max"], "policy.tau_max")
        if not tmin < tmax:
            raise ValidationError(f"ordering invariant violated: policy.tau_min ({tmin}) must be < policy.tau_max ({tmax})")
        policy = EventTriggered(_num(P["eps"], "policy.eps"), tmin, tmax)
    elif kind == "periodic_event":
        policy = PeriodicEvent(_num(P["eps"], "policy.eps"), _num(P["h"], "policy.h"),
                               _num(P["l_max"], "policy.l_max", integer=True))
    else:
        policy = Periodic(_num(P["h"], "policy.h"))

    integ = IntegratorConfig(_num(cfg["integrator.dt"], "integrator.dt"),
                             _num(cfg["integrator.event_tol"], "integrator.event_tol"),
                             _num(cfg["integrator.t_end"], "integrator.t_end"))
    integ.check_policy(policy)

    a = np.zeros(model.N + 1)
    a[0] = _num(cfg["initial.a0"], "initial.a0")
    x2 = np.asarray(cfg["initial.x2"], dtype=float).reshape(-1)
    if x2.shape != (model.p,):
        raise ValidationError(f"initial.x2 must have length p = {model.p}")
    x0 = SpectralState(a, x2)

    cond = cfg["check.condition"]
    if cond is not None and cond not in CONDITIONS:
        raise ValidationError(f"check.condition must be one of {CONDITIONS}, got {cond!r}")
    check = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("check.")}
    front = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("frontier.")}
    outputs = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("outputs.")}
    grid_num = _num(cfg["grid.num"], "grid.num", integer=True)
    if grid_num < 3:
        raise ValidationError("grid.num must be at least 3")
    march = _num(cfg["grid.march"], "grid.march", integer=True)
    if march < 1:
        raise ValidationError("grid.march must be positive")
    return RunConfig(model, gamma, Gamma, policy, integ, x0, outputs, check, front,
                     grid_num, march, source)


def bundled_config(name):
    """Path of a configuration file shipped with the package."""
    return resources.files("triggerkit").joinpath("configs", name)


def load_config(path):
    """Read, parse and validate a configuration file.

    A bare file name that does not exist locally is looked up among the
    bundled configurations.
    """
    p = Path(path)
    if not p.exists():
        alt = bundled_config(p.name)
        if p.parent == Path(".") and alt.is_file():
            return _build(parse_config(alt.read_text(), p.name), str(alt))
        raise ValidationError(f"configuration file not found: {path}")
    return _build(parse_config(p.read_text(), str(p)), str(p))
