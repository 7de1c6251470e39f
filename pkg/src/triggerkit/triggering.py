"""Sampling policies and the triggering rules that drive them."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .operator_calculus import alpha, j_integral, reduced_maps

__all__ = [
    "SelfTriggered",
    "EventTriggered",
    "PeriodicEvent",
    "Periodic",
    "TriggerPolicy",
    "SelfTriggerPlanner",
    "stm_next_interval",
    "trigger_fired",
]


def _require(cond, msg):
    if not cond:
        raise ValidationError(msg)


def _finite(*vals):
    return all(np.isfinite(v) for v in vals)


@dataclass(frozen=True)
class SelfTriggered:
    """Next transmission from the predictor ``alpha``: ``eps > 0``, ``tau_max > 0``, ``L >= 0``."""

    eps: float
    tau_max: float
    L: float = 0.0
    kind = "self_triggered"

    def __post_init__(self):
        _require(_finite(self.eps, self.tau_max, self.L), "policy parameters must be finite")
        _require(self.eps > 0, f"eps must be positive, got {self.eps}")
        _require(self.tau_max > 0, f"tau_max must be positive, got {self.tau_max}")
        _require(self.L >= 0, f"L must be nonnegative, got {self.L}")


@dataclass(frozen=True)
class EventTriggered:
    """Continuous monitoring after a dwell ``tau_min``, forced at ``tau_max``."""

    eps: float
    tau_min: float
    tau_max: float
    kind = "event_triggered"

    def __post_init__(self):
        _require(_finite(self.eps, self.tau_min, self.tau_max), "policy parameters must be finite")
        _require(self.eps >= 0, f"eps must be nonnegative, got {self.eps}")
        _require(self.tau_min > 0, f"tau_min must be positive, got {self.tau_min}")
        _require(self.tau_max > self.tau_min,
                 f"tau_min < tau_max is required, got tau_min = {self.tau_min}, tau_max = {self.tau_max}")


@dataclass(frozen=True)
class PeriodicEvent:
    """Event condition checked every ``h``; forced after ``l_max`` periods."""

    eps: float
    h: float
    l_max: int
    kind = "periodic_event"

    def __post_init__(self):
        _require(_finite(self.eps, self.h), "policy parameters must be finite")
        _require(self.eps >= 0, f"eps must be nonnegative, got {self.eps}")
        _require(self.h > 0, f"h must be positive, got {self.h}")
        lm = self.l_max
        if isinstance(lm, float) and lm.is_integer():
            object.__setattr__(self, "l_max", int(lm))
        _require(isinstance(self.l_max, (int, np.integer)) and not isinstance(self.l_max, bool)
                 and self.l_max >= 1, f"l_max must be an integer >= 1, got {lm!r}")


@dataclass(frozen=True)
class Periodic:
    """Transmission at every multiple of ``h``."""

    h: float
    kind = "periodic"

    def __post_init__(self):
        _require(_finite(self.h) and self.h > 0, f"h must be positive, got {self.h}")


TriggerPolicy = (SelfTriggered, EventTriggered, PeriodicEvent, Periodic)


class SelfTriggerPlanner:
    """Precomputed data for repeated self-triggered interval computations.

    The integral term of ``alpha`` does not depend on the transmitted state,
    so it is tabulated once on the march grid ``j tau_max / march``; only the
    final bisection evaluates it afresh.
    """

    def __init__(self, model, env, policy, march=1000, tol=1e-9):
        if not isinstance(policy, SelfTriggered):
            raise ValidationError("SelfTriggerPlanner needs a SelfTriggered policy")
        self.model, self.env, self.policy = model, env, policy
        self.tol = tol
        self.taus = np.linspace(0.0, policy.tau_max, march + 1)
        self.rows = reduced_maps(model).fid_row(self.taus)
        if policy.L > 0.0:
            self.J = j_integral(model, env, policy.L, policy.eps, self.taus)
        else:
            self.J = np.zeros_like(self.taus)

    def alpha(self, xi, tau):
        p = self.policy
        return alpha(self.model, self.env, p.L, p.eps, xi, tau)

    def next_interval(self, x_tk):
        p = self.policy
        nx = x_tk.norm()
        if nx == 0.0:
            return p.tau_max
        thr = p.eps * nx
        first = np.linalg.norm(self.rows @ x_tk.slow, axis=-1)
        vals = first + p.L * self.J * nx
        hit = np.flatnonzero(vals[1:] >= thr)
        if hit.size == 0:
            return p.tau_max
        j = hit[0] + 1
        lo, hi = self.taus[j - 1], self.taus[j]
        while hi - lo > self.tol:
            mid = 0.5 * (lo + hi)
            if self.alpha(x_tk, mid) >= thr:
                hi = mid
            else:
                lo = mid
        return float(hi)


@lru_cache(maxsize=32)
def _planner(model, env, policy, march):
    return SelfTriggerPlanner(model, env, policy, march)


def stm_next_interval(model, env, policy, x_tk, march=1000):
    """``min(tau_max, inf{tau > 0 : alpha(x_tk, tau) >= eps ||x_tk||})``."""
    return _planner(model, env, policy, march).next_interval(x_tk)


def trigger_fired(policy, x_tk, x_now, elapsed=None):
    """``||x_tk - x_now|| > eps ||x_tk||`` (strict)."""
    if not isinstance(policy, (EventTriggered, PeriodicEvent)):
        raise ValidationError("trigger_fired applies to event-triggered policies only")
    return bool((x_tk - x_now).norm() > policy.eps * x_tk.norm())
