"""Sufficient stability conditions with margins, threshold searches and frontiers.

Every checker returns a :class:`StabilityReport` whose ``margin`` is the
right-hand side minus the left-hand side of the governing strict
inequality, so ``satisfied`` is exactly ``margin > 0``.  When a condition is
a conjunction, the margin is the smallest of the individual margins (after
scaling each to the same units where that is natural); when either of two
alternative conditions suffices, it is the largest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateFeedback, EmptyFrontier, NoCrossing,
                     ValidationError)
from .linalg import bisect_sup, refine_max
from .operator_calculus import (DEFAULT_GRID, bf_delta_sup, c_constants,
                                finite_rank_norm, theta_lhs,
                                truncated_norm, w_of_h)

__all__ = [
    "StabilityReport",
    "FrontierRow",
    "FrontierTable",
    "varpi",
    "varpi_limit",
    "beta_e",
    "check_stm",
    "check_etc_linear",
    "check_etc_nonlinear",
    "check_petc",
    "petc_bounded_preset",
    "check_periodic",
    "etc_linear_bound",
    "petc_bounded_bound",
    "frontier",
    "theta_bound",
]

CONDITION_IDS = ("STM_thm26", "ETC_remark28", "ETC_coro29", "PETC_lemma45",
                 "PETC_coro48", "PERIODIC_remark211")


@dataclass(frozen=True)
class StabilityReport:
    condition_id: str
    inputs: dict
    intermediates: dict
    satisfied: bool
    margin: float

    def __post_init__(self):
        if self.condition_id not in CONDITION_IDS:
            raise ValidationError(f"unknown condition id {self.condition_id!r}")
        if bool(self.satisfied) != bool(self.margin > 0):
            raise ValidationError("satisfied must equal (margin > 0)")

    def lines(self):
        """``key = value`` lines suitable for structured text output."""
        out = [f"condition = {self.condition_id}",
               f"satisfied = {str(self.satisfied).lower()}",
               f"margin = {self.margin!r}"]
        out += [f"input.{k} = {_fmt(v)}" for k, v in self.inputs.items()]
        out += [f"intermediate.{k} = {_fmt(v)}" for k, v in self.intermediates.items()]
        return out


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return str(v)


def _report(cid, inputs, inter, margin):
    margin = float(margin)
    return StabilityReport(cid, dict(inputs), dict(inter), bool(margin > 0), margin)


def _nonneg(**kw):
    for k, v in kw.items():
        if not (np.isfinite(v) and v >= 0.0):
            raise ValidationError(f"{k} must be finite and nonnegative, got {v}")


def _positive(**kw):
    for k, v in kw.items():
        if not (np.isfinite(v) and v > 0.0):
            raise ValidationError(f"{k} must be positive, got {v}")


# --------------------------------------------------------------------------
# self-triggering

def varpi(env, normB, L, eps, tau):
    """Growth factor of the perturbation integral over one STM interval.

    ``[(1 - k)(e^{GL tau} - 1) + k GL (e^{(GL + g) tau} - 1)/(GL + g)] / (e^{g tau} - 1)``
    with ``k = eps Gamma ||B|| / gamma`` and ``GL = Gamma L``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0.0):
        raise ValidationError("varpi needs tau > 0; use varpi_limit for tau -> 0")
    G, g = env.Gamma, env.gamma
    GL = G * L
    k = eps * G * normB / g
    num = (1.0 - k) * np.expm1(GL * tau) + k * GL * np.expm1((GL + g) * tau) / (GL + g)
    out = num / np.expm1(g * tau)
    return float(out) if out.ndim == 0 else out


def varpi_limit(env, L):
    """``lim_{tau -> 0} varpi = Gamma L / gamma``."""
    return env.Gamma * L / env.gamma


def check_stm(env, normB, L, eps, tau_max):
    """``max(Gamma L/gamma, varpi(tau_max)) + Gamma ||B|| eps/gamma < 1``."""
    _nonneg(normB=normB, L=L, eps=eps)
    _positive(tau_max=tau_max)
    vp = varpi(env, normB, L, eps, tau_max)
    vs = max(varpi_limit(env, L), vp)
    bs = env.Gamma * normB / env.gamma
    lhs = vs + bs * eps
    inputs = dict(Gamma=env.Gamma, gamma=env.gamma, normB=normB, L=L, eps=eps, tau_max=tau_max)
    inter = dict(varpi=vp, varpi_s=vs, b_s=bs, lhs=lhs)
    return _report("STM_thm26", inputs, inter, 1.0 - lhs)


# --------------------------------------------------------------------------
# dwell-time event triggering

def etc_linear_bound(model, env, tau_min, grid_num=DEFAULT_GRID):
    """Right-hand side of the unperturbed ETC condition and its pieces."""
    G, g = env.Gamma, env.gamma
    sup_bf = bf_delta_sup(model, tau_min, grid_num)
    num = g * np.exp(-g * tau_min) - G * sup_bf
    den = np.exp(g * tau_min) * G * model.norm_BF
    return num / den, dict(sup_BF_I_minus_Delta=sup_bf, norm_BF=model.norm_BF,
                           numerator=num, denominator=den)


def check_etc_linear(model, env, eps, tau_min, grid_num=DEFAULT_GRID):
    """Unperturbed ETC: ``eps < [g e^{-g tau_min} - Gamma sup ||BF(I - Delta)||] / [e^{g tau_min} Gamma ||BF||]``."""
    _nonneg(eps=eps)
    _positive(tau_min=tau_min)
    if model.norm_BF == 0.0:
        raise DegenerateFeedback("BF = 0: the feedback has no effect on the plant")
    bound, inter = etc_linear_bound(model, env, tau_min, grid_num)
    inter["eps_bound"] = bound
    inputs = dict(Gamma=env.Gamma, gamma=env.gamma, eps=eps, tau_min=tau_min)
    return _report("ETC_coro29", inputs, inter, bound - eps)


def _E(k, x):
    """``int_0^x e^{k s} ds``, safe for ``k x -> 0``."""
    z = k * x
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    return x * np.where(small, 1.0 + z / 2.0, np.expm1(zs) / zs)


def _upsilon_integral(env, L, eps, norm_BF, c1, c2, tau_m, tau):
    """``int_0^tau e^{-gamma(tau - s)} Upsilon(s) ds`` for ``tau >= tau_m``, in closed form."""
    G, g = env.Gamma, env.gamma
    a = c2 * L
    GL = G * L
    U = tau - tau_m
    ec = eps * G * norm_BF / g
    decay = np.exp(-g * U)
    i1 = np.exp(-g * tau) * c1 * _E(g + a, tau_m)
    i2 = c1 * G * np.exp(a * tau_m) * decay * _E(GL, U)
    i3 = ec * decay * (_E(g + GL, U) - _E(GL, U))
    return i1 + i2 + i3


def _beta_e_grid(env, L, eps, norm_BF, c1, c2, tau_m, tau_max, num):
    taus = tau_m + (tau_max - tau_m) * np.linspace(0.0, 1.0, num)
    fac = env.Gamma * L / -np.expm1(-env.gamma * taus)
    return taus, fac * _upsilon_integral(env, L, eps, norm_BF, c1, c2, tau_m, taus)


def beta_e(env, L, eps, norm_BF, c1, c2, tau_m, tau_max, grid_num=DEFAULT_GRID, refine=True):
    """``sup_{tau_m <= tau <= tau_max} Gamma L/(1 - e^{-gamma tau}) int_0^tau e^{-gamma(tau-s)} Upsilon(s) ds``."""
    if L == 0.0:
        return 0.0
    taus, vals = _beta_e_grid(env, L, eps, norm_BF, c1, c2, tau_m, tau_max, grid_num)
    if not refine:
        return float(vals.max())

    def f(t):
        return float(env.Gamma * L / -np.expm1(-env.gamma * t)
                     * _upsilon_integral(env, L, eps, norm_BF, c1, c2, tau_m, t))

    v, _ = refine_max(f, taus, vals)
    return v


def check_etc_nonlinear(model, env, L, eps, tau_min, tau_max, sigma=None, grid_num=DEFAULT_GRID):
    """The two inequalities for the dwell-time ETM under a Lipschitz perturbation.

    ``varsigma_1 = gamma e^{-gamma tau_min} - Gamma sup_{tau <= tau_min}
    (||BF(I - Delta_tau)|| + c1 ||BF|| (e^{c2 L tau} - 1))`` must be positive
    and ``sup_{0 < tau' <= tau_min} (beta_e(tau') + eps e^{gamma tau'} Gamma ||BF||/gamma)``
    must stay below ``varsigma_1 / gamma``.  In ``beta_e(tau')`` the constants
    ``c1, c2`` are the sups over ``[0, tau']``.

    ``sigma`` is the free parameter of the underlying proof.  The two
    inequalities above already optimize over it, so it does not affect
    ``satisfied``; the fixed-``sigma`` versions are reported as intermediates.
    """
    _nonneg(L=L, eps=eps)
    _positive(tau_min=tau_min, tau_max=tau_max)
    if not tau_min < tau_max:
        raise ValidationError("tau_min < tau_max is required")
    g, G = env.gamma, env.Gamma
    if sigma is None:
        sigma = g / 2.0
    if not (0.0 < sigma < g):
        raise ValidationError(f"sigma must lie in (0, gamma) = (0, {g}), got {sigma}")
    nBF = model.norm_BF
    cc = c_constants(model, tau_min, grid_num)
    c1, c2 = cc.c1, cc.c2

    def g_inner(t):
        return finite_rank_norm(model, "BF_I_minus_Delta", t) + c1 * nBF * np.expm1(c2 * L * t)

    ts = cc.ts
    gval, _ = refine_max(g_inner, ts, g_inner(ts))
    g_sup = G * gval
    s1 = g * np.exp(-g * tau_min) - g_sup

    # running sups c_i(tau') on the grid; the last point uses the refined values
    c1_run = np.maximum.accumulate(cc.delta_norms)
    c2_run = np.maximum.accumulate(cc.t_norms)
    c1_run[-1], c2_run[-1] = c1, c2
    inner_num = max(201, grid_num // 10)
    worst, worst_tau = -np.inf, float("nan")
    be_vals = np.empty(ts.size - 1)
    for i in range(1, ts.size):
        tp = ts[i]
        be = beta_e(env, L, eps, nBF, c1_run[i], c2_run[i], tp, tau_max, inner_num, refine=False)
        be_vals[i - 1] = be
        val = be + eps * np.exp(g * tp) * G * nBF / g
        if val > worst:
            worst, worst_tau = val, tp
    i_w = int(np.argmin(np.abs(ts - worst_tau)))
    be_w = beta_e(env, L, eps, nBF, c1_run[i_w], c2_run[i_w], worst_tau, tau_max, grid_num)
    worst = max(worst, be_w + eps * np.exp(g * worst_tau) * G * nBF / g)
    lhs2 = worst
    margin = min(s1, s1 / g - lhs2)

    # fixed-sigma form of the same two requirements
    cond1_sigma = g * -np.expm1(-g * tau_min) + g_sup <= sigma
    cond2_sigma = lhs2 < (g - sigma) / g
    inputs = dict(Gamma=G, gamma=g, L=L, eps=eps, tau_min=tau_min, tau_max=tau_max, sigma=sigma)
    inter = dict(c1=c1, c2=c2, norm_BF=nBF, g=g_sup, varsigma_1=s1,
                 beta_e=float(be_vals[-1]), sup_second_lhs=lhs2, argsup_tau=worst_tau,
                 second_rhs=s1 / g, sigma_cond1=bool(cond1_sigma),
                 sigma_cond2=bool(cond2_sigma))
    return _report("ETC_remark28", inputs, inter, margin)


# --------------------------------------------------------------------------
# periodic event triggering

def petc_bounded_preset(env, W, h):
    """``(Omega, omega) = (Gamma, 1 - [gamma - W(h)] e^{-gamma h} h)``."""
    return env.Gamma, 1.0 - (env.gamma - W) * np.exp(-env.gamma * h) * h


def petc_bounded_bound(model, env, L, h, grid_num=DEFAULT_GRID):
    """Right-hand side of the bounded-control PETC condition with its pieces."""
    G, g = env.Gamma, env.gamma
    W = w_of_h(model, env, h, grid_num)
    cc = c_constants(model, h, grid_num)
    nSF = truncated_norm(model, "SF", h)
    if nSF == 0.0:
        raise DegenerateFeedback(f"S_h B F vanishes at h = {h}")
    e = np.expm1(cc.c2 * L * h)
    num = (g - W) * np.exp(-g * h) * h - cc.c1 * G * e
    den = G * (nSF + cc.c3 * e)
    return num / den, dict(W=W, c1=cc.c1, c2=cc.c2, c3=cc.c3, norm_SF=nSF,
                           numerator=num, denominator=den)


def check_petc(variant, L, eps, h, model=None, env=None, Omega=None, omega=None,
               normSF=None, c1=None, c2=None, c3=None, grid_num=DEFAULT_GRID):
    """Periodic event-triggering conditions.

    ``variant="power_stable"`` checks
    ``eps Omega (||S_h F|| + c3 (e^{c2 L h} - 1)) < 1 - omega - c1 Omega (e^{c2 L h} - 1)``
    for user-supplied ``Omega >= 1`` and ``omega in (0, 1)``; the norms and
    ``c_i`` may be given or computed from ``model``.

    ``variant="bounded"`` checks
    ``eps < ([gamma - W(h)] e^{-gamma h} h - c1 Gamma (e^{c2 L h} - 1)) / (Gamma (||S_h F|| + c3 (e^{c2 L h} - 1)))``.
    """
    _nonneg(L=L, eps=eps)
    _positive(h=h)
    if variant == "bounded":
        if model is None or env is None:
            raise ValidationError("the bounded variant needs a model and an envelope")
        bound, inter = petc_bounded_bound(model, env, L, h, grid_num)
        Om, om = petc_bounded_preset(env, inter["W"], h)
        inter.update(eps_bound=bound, Omega=Om, omega=om)
        inputs = dict(Gamma=env.Gamma, gamma=env.gamma, L=L, eps=eps, h=h)
        return _report("PETC_coro48", inputs, inter, bound - eps)
    if variant != "power_stable":
        raise ValidationError(f"unknown PETC variant {variant!r}")
    if Omega is None or omega is None:
        raise ValidationError("the power_stable variant needs Omega and omega")
    if not Omega >= 1.0:
        raise ValidationError(f"Omega must be >= 1, got {Omega}")
    if not 0.0 < omega < 1.0:
        raise ValidationError(f"omega must lie in (0, 1), got {omega}")
    if normSF is None or c1 is None or c2 is None or c3 is None:
        if model is None:
            raise ValidationError("normSF and c1..c3 must be given when no model is supplied")
        cc = c_constants(model, h, grid_num)
        normSF = truncated_norm(model, "SF", h) if normSF is None else normSF
        c1 = cc.c1 if c1 is None else c1
        c2 = cc.c2 if c2 is None else c2
        c3 = cc.c3 if c3 is None else c3
    e = np.expm1(c2 * L * h)
    om1 = omega + c1 * Omega * e
    d1 = eps * Omega * (normSF + c3 * e)
    d2 = d1 / (1.0 - om1) if om1 < 1.0 else float("inf")
    margin = 1.0 - om1 - d1
    inputs = dict(L=L, eps=eps, h=h, Omega=Omega, omega=omega)
    inter = dict(norm_SF=normSF, c1=c1, c2=c2, c3=c3, omega_tilde_1=om1, delta_1=d1, delta_2=d2)
    return _report("PETC_lemma45", inputs, inter, margin)


def check_periodic(model, env, h, grid_num=DEFAULT_GRID):
    """``W(h) < gamma`` or ``Gamma e^{gamma h} sup ||BF(I - Delta_t)|| < gamma``.

    Either inequality alone is sufficient, so the reported margin is the
    larger of the two; each margin is also listed separately.
    """
    _positive(h=h)
    g = env.gamma
    W = w_of_h(model, env, h, grid_num)
    second = env.Gamma * np.exp(g * h) * bf_delta_sup(model, h, grid_num)
    m1, m2 = g - W, g - second
    inputs = dict(Gamma=env.Gamma, gamma=g, h=h)
    inter = dict(W=W, margin_W=m1, sampled_bound=second, margin_sampled=m2,
                 satisfied_W=bool(m1 > 0), satisfied_sampled=bool(m2 > 0))
    return _report("PERIODIC_remark211", inputs, inter, max(m1, m2))


# --------------------------------------------------------------------------
# threshold searches

@dataclass(frozen=True)
class FrontierRow:
    abscissa: float
    bound: float
    bracket_lo: float
    bracket_hi: float
    feasible: bool


@dataclass(frozen=True)
class FrontierTable:
    target: str
    abscissa_name: str
    bound_name: str
    rows: tuple = field(default_factory=tuple)
    monotone: str = "none"

    @property
    def abscissae(self):
        return np.array([r.abscissa for r in self.rows])

    @property
    def bounds(self):
        return np.array([r.bound for r in self.rows])


_TARGETS = {
    "eps_vs_taumin": ("tau_min", "eps_bound"),
    "max_taumax_stm": ("eps", "tau_max_bound"),
    "max_h_periodic": ("Gamma", "h_bound"),
    "eps_vs_h_petc": ("h", "eps_bound"),
}

_DEFAULT_GRIDS = {
    "eps_vs_taumin": np.linspace(0.001, 0.01, 10),
    "eps_vs_h_petc": np.linspace(0.001, 0.01, 10),
}


def _monotone(bounds):
    b = np.asarray(bounds, dtype=float)
    b = b[np.isfinite(b)]
    if b.size < 2:
        return "constant"
    d = np.diff(b)
    if np.all(d == 0):
        return "constant"
    if np.all(d <= 0):
        return "nonincreasing"
    if np.all(d >= 0):
        return "nondecreasing"
    return "none"


def frontier(model, env, target, fixed=None, grid=None, tol=1e-6, grid_num=DEFAULT_GRID):
    """Tabulate the supremal feasible parameter along a grid of abscissae.

    Targets
    -------
    eps_vs_taumin
        abscissa ``tau_min``; bound is the largest ``eps`` for the ETC
        condition (unperturbed when ``fixed["L"]`` is 0, otherwise the
        perturbed condition with ``fixed["tau_max"]``).
    max_taumax_stm
        abscissa ``eps``; bound is the largest ``tau_max`` for the STM
        condition with ``fixed["L"]``.
    max_h_periodic
        abscissa ``Gamma`` (defaults to ``[env.Gamma]``); bound is the largest
        ``h`` with ``W(h) < gamma``.
    eps_vs_h_petc
        abscissa ``h``; bound is the largest ``eps`` for the bounded PETC
        condition with ``fixed["L"]``.

    Bounds that come from a bisection carry a bracket ``[lo, hi]`` of width
    at most ``tol``; explicit bounds have ``lo == hi``.
    """
    if target not in _TARGETS:
        raise ValidationError(f"unknown frontier target {target!r}; expected one of {tuple(_TARGETS)}")
    fixed = dict(fixed or {})
    L = float(fixed.get("L", 0.0))
    if grid is None:
        if target == "max_h_periodic":
            grid = [env.Gamma]
        elif target == "max_taumax_stm":
            if "eps" not in fixed:
                raise ValidationError("max_taumax_stm needs a grid of eps values or fixed['eps']")
            grid = [fixed["eps"]]
        else:
            grid = _DEFAULT_GRIDS[target]
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    rows = []
    for x in grid:
        if target == "eps_vs_taumin":
            if L == 0.0:
                b, _ = etc_linear_bound(model, env, x, grid_num)
                rows.append(FrontierRow(x, b, b, b, bool(b > 0)))
                continue
            tau_max = float(fixed.get("tau_max", 0.5))

            def pred(e, x=x):
                return check_etc_nonlinear(model, env, L, e, x, tau_max, grid_num=grid_num).satisfied
            lo, hi = bisect_sup(pred, 0.0, 0.1, tol=tol)
        elif target == "eps_vs_h_petc":
            b, _ = petc_bounded_bound(model, env, L, x, grid_num)
            rows.append(FrontierRow(x, b, b, b, bool(b > 0)))
            continue
        elif target == "max_taumax_stm":
            nB = model.norm_B

            def pred(t, x=x):
                return check_stm(env, nB, L, x, t).satisfied
            lo, hi = bisect_sup(pred, 1e-9, 1.0, tol=tol, hi_cap=1e3)
        else:
            from .operator_calculus import DecayEnvelope
            env_x = DecayEnvelope(env.gamma, x)

            def pred(h, e=env_x):
                return w_of_h(model, e, h, grid_num) < e.gamma
            lo, hi = bisect_sup(pred, 1e-6, 0.01, tol=tol, hi_cap=1e3)
        if lo is None:
            rows.append(FrontierRow(x, float("nan"), float("nan"), hi, False))
        else:
            rows.append(FrontierRow(x, lo, lo, hi, True))
    if not any(r.feasible for r in rows):
        raise EmptyFrontier(f"no abscissa of the {target} sweep admits a feasible parameter")
    name, bname = _TARGETS[target]
    return FrontierTable(target, name, bname, tuple(rows),
                         _monotone([r.bound for r in rows if r.feasible]))


def theta_bound(model, env, L, eps, tau_cap=10.0, tol=1e-8, march=1000):
    """Lower bound on the STM inter-event times.

    ``theta = inf{tau >= 0 : ||F(I - Delta_tau)|| + L J(tau) >= eps}``; the
    first crossing is bracketed on a doubling sequence and a uniform march,
    then bisected to ``tol``.
    """
    _positive(eps=eps)
    _nonneg(L=L)

    def lhs(t):
        return theta_lhs(model, env, L, eps, t)

    hi = 1e-4
    while lhs(hi) < eps:
        if hi >= tau_cap:
            raise NoCrossing(f"the inter-event bound exceeds {tau_cap}")
        hi = min(2.0 * hi, tau_cap)
    ts = np.linspace(0.0, hi, march + 1)
    vals = theta_lhs(model, env, L, eps, ts[1:])
    j = int(np.argmax(vals >= eps)) + 1
    lo, hi = ts[j - 1], ts[j]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if lhs(mid) >= eps:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
