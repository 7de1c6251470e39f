"""Closed-loop simulation under a sampling policy.

Between transmissions the input is constant, so the linear part of the
mild solution is propagated exactly with ``T(dt)`` and ``S_dt``.  Only the
perturbation needs substeps: each one is a predictor with ``phi(x)``
followed by a corrector that re-evaluates ``phi`` at the midpoint state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllZeroTail, DivergenceDetected, ValidationError
from .spectral_model import SpectralState, propagator, psi
from .triggering import (EventTriggered, Periodic, PeriodicEvent,
                         SelfTriggered, SelfTriggerPlanner)

__all__ = ["IntegratorConfig", "SimulationTrace", "step", "run", "decay_fit"]

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-4
    event_tol: float = 1e-9
    t_end: float = 10.0

    def __post_init__(self):
        for k in ("dt", "event_tol", "t_end"):
            v = getattr(self, k)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{k} must be positive, got {v}")
        if not self.event_tol < self.dt:
            raise ValidationError("event_tol < dt is required")

    def check_policy(self, policy):
        scales = {
            SelfTriggered: lambda p: p.tau_max,
            EventTriggered: lambda p: p.tau_min,
            PeriodicEvent: lambda p: p.h,
            Periodic: lambda p: p.h,
        }
        scale = scales[type(policy)](policy)
        if self.dt > scale:
            raise ValidationError(f"dt = {self.dt} must not exceed the policy time scale {scale}")


@dataclass
class SimulationTrace:
    """Samples at every substep boundary plus the transmission record.

    ``inputs[i]`` is the input held from ``sample_times[i]`` on;
    ``tk_norms[i]`` is ``||x(t_k)||`` for the last transmission at or before
    sample ``i``; ``input_errors`` and ``state_errors`` are
    ``|F x(t_k) - F x(t)|`` and ``||x(t_k) - x(t)||``.
    """

    sample_times: np.ndarray
    state_norms: np.ndarray
    inputs: np.ndarray
    is_event: np.ndarray
    input_errors: np.ndarray
    state_errors: np.ndarray
    tk_norms: np.ndarray
    final_state: SpectralState
    metadata: dict = field(default_factory=dict)

    @property
    def event_times(self):
        return self.sample_times[self.is_event]

    @property
    def inter_event_times(self):
        return np.diff(self.event_times)


class _Stepper:
    """Array-level integrator for one model; caches propagators per step length."""

    def __init__(self, model):
        self.model = model
        self.Bs = model.input_col
        self.bc = model.modes.bcoef
        self.active = not model.nonlin.trivial
        self.frow = model.feedback_row

    def phi(self, slow):
        spec = self.model.nonlin
        x2 = slow[1:]
        psi0 = psi(spec, x2) - x2
        f = self.bc @ psi0
        fs = np.zeros_like(slow)
        fs[0] = f[0]
        return fs, f[1:]

    def __call__(self, slow, fast, u, h):
        P = propagator(self.model, h)
        T, S = P.T, P.S
        ts, tf = T.apply(slow, fast)
        bu = self.Bs @ u
        if not self.active:
            fs, ff = S.apply(bu, np.zeros_like(fast))
            return ts + fs, tf + ff
        ps, pf = self.phi(slow)
        fs, ff = S.apply(bu + ps, pf)
        ms, mf = 0.5 * (slow + ts + fs), 0.5 * (fast + tf + ff)
        ps, pf = self.phi(ms)
        fs, ff = S.apply(bu + ps, pf)
        return ts + fs, tf + ff

    def feedback(self, slow):
        return self.frow @ slow


def step(model, state, held_u, dt):
    """One exponential-integrator substep of the mild solution."""
    dt = float(dt)
    if not (np.isfinite(dt) and dt > 0):
        raise ValidationError(f"dt must be positive, got {dt}")
    u = np.asarray(held_u, dtype=float).reshape(model.m)
    if not np.all(np.isfinite(u)):
        raise ValidationError("held input must be finite")
    slow, fast = _Stepper(model)(state.slow, state.fast, u, dt)
    return SpectralState.from_slow_fast(slow, fast)


class _Recorder:
    def __init__(self, model):
        self.t, self.norm, self.u, self.ev = [], [], [], []
        self.ierr, self.serr, self.tkn = [], [], []
        self.frow = model.feedback_row

    def add(self, t, slow, fast, u, event, tk_slow, tk_fast):
        n = float(np.sqrt(slow @ slow + fast @ fast))
        if not np.isfinite(n) or n > DIVERGENCE_LIMIT:
            raise DivergenceDetected(f"state norm {n:.3g} exceeded {DIVERGENCE_LIMIT:g} at t = {t:.6g}")
        ds, df = tk_slow - slow, tk_fast - fast
        self.t.append(t)
        self.norm.append(n)
        self.u.append(np.array(u))
        self.ev.append(event)
        self.ierr.append(float(np.linalg.norm(self.frow @ ds)))
        self.serr.append(float(np.sqrt(ds @ ds + df @ df)))
        self.tkn.append(float(np.sqrt(tk_slow @ tk_slow + tk_fast @ tk_fast)))


def _substeps(length, dt):
    n = max(1, int(np.ceil(length / dt - 1e-9)))
    return n, length / n


def run(model, env, policy, x0, cfg=None, march=1000):
    """Simulate the closed loop on ``[0, cfg.t_end]`` under ``policy``."""
    cfg = cfg or IntegratorConfig()
    if not isinstance(policy, (SelfTriggered, EventTriggered, PeriodicEvent, Periodic)):
        raise ValidationError(f"unsupported policy {policy!r}")
    cfg.check_policy(policy)
    stepper = _Stepper(model)
    rec = _Recorder(model)
    slow, fast = x0.slow.copy(), x0.fast.copy()
    t = 0.0
    t_end = cfg.t_end
    planner = SelfTriggerPlanner(model, env, policy, march) if isinstance(policy, SelfTriggered) else None

    def norm(s, f):
        return float(np.sqrt(s @ s + f @ f))

    def fired(tk_s, tk_f, s, f):
        return norm(tk_s - s, tk_f - f) > policy.eps * norm(tk_s, tk_f)

    tk_s, tk_f = slow.copy(), fast.copy()
    u = stepper.feedback(slow)
    rec.add(t, slow, fast, u, True, tk_s, tk_f)

    def advance(s, f, length, t0, check=None):
        """Substep over ``length``; stop at the first substep where ``check`` fires."""
        n, h = _substeps(length, cfg.dt)
        for i in range(n):
            s_prev, f_prev = s, f
            s, f = stepper(s, f, u, h)
            t_i = t0 + (i + 1) * h if i + 1 < n else t0 + length
            if check is not None and check(s, f):
                # bisect the first flip inside this substep
                lo, hi = 0.0, h
                s_hi, f_hi = s, f
                while hi - lo > cfg.event_tol:
                    mid = 0.5 * (lo + hi)
                    sm, fm = stepper(s_prev, f_prev, u, mid)
                    if check(sm, fm):
                        hi, s_hi, f_hi = mid, sm, fm
                    else:
                        lo = mid
                t_ev = t0 + i * h + hi
                return s_hi, f_hi, t_ev, True
            last = i + 1 == n
            if not last:
                rec.add(t_i, s, f, u, False, tk_s, tk_f)
        return s, f, t0 + length, False

    while t < t_end - 1e-12:
        if isinstance(policy, SelfTriggered):
            x_tk = SpectralState.from_slow_fast(tk_s, tk_f)
            tau = min(planner.next_interval(x_tk), t_end - t)
            slow, fast, t, _ = advance(slow, fast, tau, t)
        elif isinstance(policy, Periodic):
            slow, fast, t, _ = advance(slow, fast, min(policy.h, t_end - t), t)
        elif isinstance(policy, EventTriggered):
            t_k = t
            dwell = min(policy.tau_min, t_end - t)
            slow, fast, t, _ = advance(slow, fast, dwell, t)
            if t < t_end - 1e-12 and not fired(tk_s, tk_f, slow, fast):
                rec.add(t, slow, fast, u, False, tk_s, tk_f)
                rest = min(t_k + policy.tau_max, t_end) - t
                slow, fast, t, _ = advance(slow, fast, rest, t,
                                           lambda s, f: fired(tk_s, tk_f, s, f))
        else:  # PeriodicEvent
            for j in range(1, policy.l_max + 1):
                h = min(policy.h, t_end - t)
                slow, fast, t, _ = advance(slow, fast, h, t)
                if t >= t_end - 1e-12 or j == policy.l_max or fired(tk_s, tk_f, slow, fast):
                    break
                rec.add(t, slow, fast, u, False, tk_s, tk_f)
        if t >= t_end - 1e-12:
            rec.add(t, slow, fast, u, False, tk_s, tk_f)
            break
        tk_s, tk_f = slow.copy(), fast.copy()
        u = stepper.feedback(slow)
        rec.add(t, slow, fast, u, True, tk_s, tk_f)

    m = model.m
    meta = dict(policy=policy.kind, dt=cfg.dt, event_tol=cfg.event_tol, t_end=t_end)
    return SimulationTrace(
        np.asarray(rec.t), np.asarray(rec.norm), np.asarray(rec.u).reshape(-1, m),
        np.asarray(rec.ev, dtype=bool), np.asarray(rec.ierr), np.asarray(rec.serr),
        np.asarray(rec.tkn), SpectralState.from_slow_fast(slow, fast), meta)


def decay_fit(trace, t_start=0.0):
    """Least-squares fit ``log ||x(t)|| ~ log Gamma - gamma t`` on ``t >= t_start``."""
    t = np.asarray(trace.sample_times)
    n = np.asarray(trace.state_norms)
    sel = (t >= t_start) & (n > 0.0)
    if np.count_nonzero(sel) < 2:
        raise AllZeroTail(f"state is numerically zero on [{t_start}, {t[-1] if t.size else t_start}]")
    slope, icpt = np.polyfit(t[sel], np.log(n[sel]), 1)
    return float(np.exp(icpt)), float(-slope)
