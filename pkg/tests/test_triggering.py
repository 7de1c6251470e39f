import numpy as np
import pytest

from triggerkit.errors import ValidationError
from triggerkit.operator_calculus import alpha, finite_rank_norm
from triggerkit.spectral_model import SpectralState, reference_model
from triggerkit.stability_conditions import theta_bound
from triggerkit.triggering import (EventTriggered, Periodic, PeriodicEvent,
                                   SelfTriggered, SelfTriggerPlanner,
                                   stm_next_interval, trigger_fired)

L_SMALL = np.sqrt(5) * 0.05


@pytest.mark.parametrize("make", [
    lambda: SelfTriggered(0.0, 0.5),
    lambda: SelfTriggered(0.1, 0.0),
    lambda: SelfTriggered(0.1, 0.5, -1.0),
    lambda: EventTriggered(-0.1, 0.001, 0.5),
    lambda: EventTriggered(0.1, 0.0, 0.5),
    lambda: PeriodicEvent(0.1, 0.0, 3),
    lambda: PeriodicEvent(0.1, 0.01, 0),
    lambda: PeriodicEvent(0.1, 0.01, 2.5),
    lambda: Periodic(-1.0),
    lambda: Periodic(np.nan),
])
def test_policy_validation(make):
    with pytest.raises(ValidationError):
        make()


def test_event_triggered_ordering_message():
    with pytest.raises(ValidationError, match="tau_min < tau_max"):
        EventTriggered(0.1, 0.5, 0.5)


def test_policies_frozen():
    p = Periodic(0.1)
    with pytest.raises(Exception):
        p.h = 0.2
    assert PeriodicEvent(0.1, 0.01, 3.0).l_max == 3


def unit(model, rng):
    v = rng.standard_normal(model.dim)
    return SpectralState.from_vector(v / np.linalg.norm(v), model.p)


def test_trigger_fired_strict():
    m = reference_model(N=5)
    rng = np.random.default_rng(0)
    x = unit(m, rng)
    d = unit(m, rng)
    pol = EventTriggered(0.07, 0.001, 0.5)
    assert not trigger_fired(pol, x, x)
    assert trigger_fired(EventTriggered(0.0, 0.001, 0.5), x, x + 1e-12 * d)
    assert not trigger_fired(EventTriggered(0.0, 0.001, 0.5), x, x)
    # exact binary arithmetic: error norm 0.5 against threshold eps * 1 with eps = 0.5
    e0 = SpectralState(np.r_[1.0, np.zeros(5)], np.zeros(1))
    e1 = SpectralState(np.r_[0.5, np.zeros(5)], np.zeros(1))
    assert not trigger_fired(PeriodicEvent(0.5, 0.01, 3), e0, e1)
    assert trigger_fired(PeriodicEvent(0.4999999, 0.01, 3), e0, e1)
    with pytest.raises(ValidationError):
        trigger_fired(Periodic(0.1), x, x)


def test_trigger_fired_near_threshold():
    m = reference_model(N=5)
    rng = np.random.default_rng(1)
    x = unit(m, rng)
    d = unit(m, rng)
    x_now = x + 0.07 * d
    err = (x - x_now).norm()
    assert not trigger_fired(EventTriggered(err, 0.001, 0.5), x, x_now)
    assert trigger_fired(EventTriggered(err * (1 - 1e-9), 0.001, 0.5), x, x_now)


def test_stm_zero_state(env):
    m = reference_model(r1=0.05, r2=0.05)
    pol = SelfTriggered(0.4, 0.5, L_SMALL)
    assert stm_next_interval(m, env, pol, SpectralState.zeros(m)) == 0.5


def test_stm_at_least_theta(env):
    m = reference_model(r1=0.05, r2=0.05)
    pol = SelfTriggered(0.4, 0.5, L_SMALL)
    theta = theta_bound(m, env, L_SMALL, 0.4)
    rng = np.random.default_rng(2)
    for _ in range(30):
        x = unit(m, rng)
        assert stm_next_interval(m, env, pol, x) >= max(theta - 1e-8, 0.0140)


def test_stm_first_crossing(env):
    m = reference_model(r1=0.1, r2=0.1)
    pol = SelfTriggered(0.29, 0.5, np.sqrt(5) * 0.1)
    rng = np.random.default_rng(3)
    x = unit(m, rng)
    tau = stm_next_interval(m, env, pol, x)
    thr = pol.eps * x.norm()
    assert alpha(m, env, pol.L, pol.eps, x, tau) >= thr
    assert alpha(m, env, pol.L, pol.eps, x, tau - 2e-9) < thr
    scan = [alpha(m, env, pol.L, pol.eps, x, t) for t in np.linspace(1e-6, tau - 1e-6, 60)]
    assert max(scan) < thr


def test_stm_no_crossing_returns_tau_max(env):
    m = reference_model()
    sup = finite_rank_norm(m, "F_I_minus_Delta", np.linspace(0, 0.05, 2001)).max()
    pol = SelfTriggered(1.01 * sup, 0.05, 0.0)
    rng = np.random.default_rng(4)
    for _ in range(5):
        assert stm_next_interval(m, env, pol, unit(m, rng)) == 0.05


def test_planner_requires_stm(env):
    with pytest.raises(ValidationError):
        SelfTriggerPlanner(reference_model(), env, Periodic(0.1))
