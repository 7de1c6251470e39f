import numpy as np
import pytest
from scipy.integrate import quad

from triggerkit.errors import EmptyFrontier, NoCrossing, ValidationError
from triggerkit.operator_calculus import (DecayEnvelope, bf_delta_sup,
                                          c_constants, truncated_norm, w_of_h)
from triggerkit.spectral_model import reference_model
from triggerkit.stability_conditions import (StabilityReport, beta_e,
                                             check_etc_linear,
                                             check_etc_nonlinear,
                                             check_periodic, check_petc,
                                             check_stm, etc_linear_bound,
                                             frontier, theta_bound, varpi,
                                             varpi_limit)
from triggerkit.stability_conditions import _upsilon_integral

L_LARGE, L_SMALL = np.sqrt(5) * 0.1, np.sqrt(5) * 0.05


# ---------------------------------------------------------------- varpi / STM

def varpi_ref(G, g, nB, L, eps, tau):
    k = eps * G * nB / g
    GL = G * L
    num = (1 - k) * (np.exp(GL * tau) - 1) + k * GL * (np.exp((GL + g) * tau) - 1) / (GL + g)
    return num / (np.exp(g * tau) - 1)


def test_varpi_examples(env):
    v1 = varpi(env, 1.0, L_LARGE, 0.29, 0.5)
    v2 = varpi(env, 1.0, L_SMALL, 0.40, 0.5)
    assert v1 == pytest.approx(varpi_ref(1.92, 1.0, 1.0, L_LARGE, 0.29, 0.5), rel=1e-13)
    assert v2 == pytest.approx(varpi_ref(1.92, 1.0, 1.0, L_SMALL, 0.40, 0.5), rel=1e-13)
    assert v1 == pytest.approx(0.4327, abs=5e-4)
    assert v2 == pytest.approx(0.2153, abs=5e-4)


def test_varpi_zero_L(env):
    assert varpi(env, 1.0, 0.0, 0.3, 0.7) == 0.0
    with pytest.raises(ValidationError):
        varpi(env, 1.0, 0.1, 0.3, 0.0)


def test_varpi_limit_order(env):
    lim = varpi_limit(env, L_LARGE)
    taus = 10.0 ** -np.arange(2, 8)
    err = np.abs(varpi(env, 1.0, L_LARGE, 0.29, taus) - lim)
    order = np.diff(np.log10(err)) / -1.0
    assert np.all(order >= 0.95)


def test_check_stm_reference(env):
    assert check_stm(env, 1.0, L_LARGE, 0.29, 0.5).satisfied
    assert check_stm(env, 1.0, L_SMALL, 0.40, 0.5).satisfied
    rep = check_stm(env, 1.0, L_LARGE, 0.29, 1.0)
    assert not rep.satisfied and rep.margin < 0
    assert {"varpi", "varpi_s", "b_s", "lhs"} <= rep.intermediates.keys()


def test_check_stm_monotone(env):
    Ls = np.linspace(0.0, 0.4, 9)
    es = np.linspace(0.01, 0.5, 9)
    ts = np.linspace(0.05, 2.0, 9)
    sat = np.array([[[check_stm(env, 1.0, L, e, t).satisfied for t in ts] for e in es] for L in Ls])
    # once violated, larger parameters stay violated
    for axis in range(3):
        assert np.all(np.diff(sat.astype(int), axis=axis) <= 0)


def test_stm_fails_for_L_one(env):
    env2 = DecayEnvelope(1.0, 2.101)
    for eps in (1e-4, 0.01, 0.1):
        assert not check_stm(env2, 1.0, 1.0, eps, 0.5).satisfied


def test_report_invariants():
    with pytest.raises(ValidationError):
        StabilityReport("STM_thm26", {}, {}, True, -1.0)
    with pytest.raises(ValidationError):
        StabilityReport("bogus", {}, {}, True, 1.0)
    rep = StabilityReport("STM_thm26", {"a": 1.0}, {"b": True}, False, 0.0)
    assert "satisfied = false" in rep.lines()


# ---------------------------------------------------------------- ETC

def test_check_etc_linear_reference(model):
    assert check_etc_linear(model, DecayEnvelope(1.0, 1.92), 0.07, 0.001).satisfied
    assert check_etc_linear(reference_model(G=2.0), DecayEnvelope(1.0, 2.101), 0.07, 0.001).satisfied


def test_etc_linear_small_tau_limit(model, env):
    b, inter = etc_linear_bound(model, env, 1e-9, grid_num=11)
    assert b == pytest.approx(env.gamma / (env.Gamma * model.norm_BF), rel=1e-6)


def test_etc_linear_formula(model, env):
    rep = check_etc_linear(model, env, 0.05, 0.004)
    sup_bf = bf_delta_sup(model, 0.004)
    bound = (np.exp(-0.004) - 1.92 * sup_bf) / (np.exp(0.004) * 1.92 * model.norm_BF)
    assert rep.intermediates["eps_bound"] == pytest.approx(bound, rel=1e-12)
    assert rep.margin == pytest.approx(bound - 0.05, rel=1e-12)


def upsilon_ref(env, L, eps, nBF, c1, c2, tau_m, s):
    G, g = env.Gamma, env.gamma
    if s <= tau_m:
        return c1 * np.exp(c2 * L * s)
    u = s - tau_m
    eta_t = eps * G * nBF / g * (np.exp(G * L * u) - np.exp((G * L - g) * u))
    return c1 * G * np.exp(c2 * L * tau_m) * np.exp((G * L - g) * u) + eta_t


@pytest.mark.parametrize("tau", [0.001, 0.01, 0.3, 0.5])
def test_upsilon_integral_quadrature(env, tau):
    args = (env, 0.3, 0.05, 6.4, 1.02, 1.01, 0.001)
    ref, _ = quad(lambda s: np.exp(-(tau - s)) * upsilon_ref(*args, s), 0.0, tau,
                  points=[0.001] if tau > 0.001 else None, epsabs=1e-14, epsrel=1e-12)
    assert _upsilon_integral(*args, tau) == pytest.approx(ref, rel=1e-9)


def test_beta_e_quadrature(env):
    args = (env, 0.3, 0.05, 6.4, 1.02, 1.01, 0.001)
    taus = np.linspace(0.001, 0.5, 400)
    ref = max(env.Gamma * 0.3 / (1 - np.exp(-t)) *
              quad(lambda s: np.exp(-(t - s)) * upsilon_ref(*args, s), 0, t, points=[0.001], epsabs=1e-14)[0]
              for t in taus)
    val = beta_e(env, 0.3, 0.05, 6.4, 1.02, 1.01, 0.001, 0.5)
    assert val >= ref * (1 - 1e-9)
    assert val == pytest.approx(ref, rel=1e-5)
    assert beta_e(env, 0.0, 0.05, 6.4, 1.02, 1.01, 0.001, 0.5) == 0.0


def test_etc_nonlinear_examples(model, env):
    rep = check_etc_nonlinear(model, env, np.sqrt(5) * 0.01, 0.01, 0.001, 0.5)
    assert rep.satisfied
    assert not check_etc_nonlinear(model, env, 1.0, 0.29, 0.001, 0.5).satisfied


def test_etc_nonlinear_reduces_to_linear(model):
    rng = np.random.default_rng(0)
    for _ in range(50):
        tau_min = rng.uniform(0.0005, 0.02)
        env = DecayEnvelope(rng.uniform(0.5, 1.5), rng.uniform(1.0, 3.0))
        lin = etc_linear_bound(model, env, tau_min, grid_num=101)[1]["numerator"]
        rep = check_etc_nonlinear(model, env, 0.0, 0.0, tau_min, 0.5, grid_num=101)
        assert rep.intermediates["varsigma_1"] == pytest.approx(lin, rel=1e-12, abs=1e-15)
        assert rep.satisfied == (lin > 0)


def test_etc_nonlinear_validation(model, env):
    with pytest.raises(ValidationError):
        check_etc_nonlinear(model, env, 0.1, 0.1, 0.5, 0.1)
    with pytest.raises(ValidationError):
        check_etc_nonlinear(model, env, 0.1, 0.1, 0.001, 0.5, sigma=1.5)


# ---------------------------------------------------------------- PETC / periodic

def test_petc_power_stable_L0():
    rep = check_petc("power_stable", 0.0, 0.1, 0.01, Omega=2.0, omega=0.5, normSF=0.3, c1=1.0, c2=1.0, c3=0.5)
    assert rep.margin == pytest.approx(1 - 0.5 - 0.1 * 2.0 * 0.3)
    assert rep.satisfied
    assert rep.intermediates["omega_tilde_1"] == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        check_petc("power_stable", 0.0, 0.1, 0.01, Omega=0.5, omega=0.5, normSF=0.3, c1=1, c2=1, c3=1)


def test_petc_power_stable_formula():
    L, h, eps = 0.2, 0.01, 0.05
    e = np.expm1(1.1 * L * h)
    rep = check_petc("power_stable", L, eps, h, Omega=1.5, omega=0.9, normSF=0.04, c1=1.1, c2=1.1, c3=0.05)
    assert rep.margin == pytest.approx(1 - 0.9 - 1.1 * 1.5 * e - eps * 1.5 * (0.04 + 0.05 * e))


def test_petc_bounded(model, env):
    rep = check_petc("bounded", 0.0, 0.001, 0.01, model, env)
    assert rep.intermediates["eps_bound"] > 0 and rep.satisfied
    W = w_of_h(model, env, 0.01)
    nSF = truncated_norm(model, "SF", 0.01)
    assert rep.intermediates["eps_bound"] == pytest.approx(
        (1 - W) * np.exp(-0.01) * 0.01 / (1.92 * nSF), rel=1e-10)
    assert check_petc("bounded", 0.0, 0.0, 0.03, model, env).intermediates["eps_bound"] <= 0


def test_check_periodic(model, env):
    rep = check_periodic(model, env, 0.0205)
    assert rep.intermediates["satisfied_W"]
    assert abs(rep.intermediates["margin_W"]) < 0.05
    assert not check_periodic(model, env, 0.05).intermediates["satisfied_W"]
    small = check_periodic(model, env, 1e-5)
    assert small.intermediates["satisfied_W"] and small.intermediates["satisfied_sampled"]


# ---------------------------------------------------------------- frontiers and theta

def test_frontier_eps_vs_taumin(model, env):
    tab = frontier(model, env, "eps_vs_taumin", {"L": 0.0}, np.linspace(0.0005, 0.01, 20), grid_num=501)
    assert tab.monotone == "nonincreasing"
    assert tab.rows[1].bound > 0.07 and tab.rows[1].abscissa == 0.001


def test_frontier_stm(env):
    tab = frontier(reference_model(r1=0.1, r2=0.1), env, "max_taumax_stm", {"L": L_LARGE}, [0.29])
    r = tab.rows[0]
    assert 0.89 <= r.bracket_lo <= r.bracket_hi <= 0.93
    assert r.bracket_hi - r.bracket_lo <= 1e-6
    assert check_stm(env, 1.0, L_LARGE, 0.29, r.bracket_lo).satisfied
    assert not check_stm(env, 1.0, L_LARGE, 0.29, r.bracket_hi).satisfied


def test_frontier_empty_and_unknown(model, env):
    with pytest.raises(EmptyFrontier):
        frontier(model, env, "max_taumax_stm", {"L": 1.0}, [0.29])
    with pytest.raises(ValidationError):
        frontier(model, env, "nope")


def test_frontier_bracket_nonlinear(model, env):
    tab = frontier(model, env, "eps_vs_taumin", {"L": np.sqrt(5) * 0.01, "tau_max": 0.5}, [0.001],
                   tol=1e-4, grid_num=201)
    r = tab.rows[0]
    assert r.feasible and r.bracket_hi - r.bracket_lo <= 1e-4
    assert check_etc_nonlinear(model, env, np.sqrt(5) * 0.01, r.bracket_lo, 0.001, 0.5, grid_num=201).satisfied


def test_theta_bounds(env):
    large = theta_bound(reference_model(r1=0.1, r2=0.1), env, L_LARGE, 0.29)
    small = theta_bound(reference_model(r1=0.05, r2=0.05), env, L_SMALL, 0.40)
    assert 0.0097 <= large <= 0.0107
    assert 0.0140 <= small <= 0.0154
    assert theta_bound(reference_model(r1=0.1, r2=0.1), env, L_LARGE, 0.58) > large


def test_theta_no_crossing(model, env):
    with pytest.raises(NoCrossing):
        theta_bound(model, env, 0.0, 1e6, tau_cap=0.01)
