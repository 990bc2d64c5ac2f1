import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risdelay.channel import McsTable, SnrModel, mcs_probs
from risdelay.mathx import RandomStream, minimize_1d
from risdelay.snc import (
    ArrivalEnvelope,
    SearchConfig,
    ServiceMix,
    ServiceSpec,
    ServiceUnderflowError,
    bound_objective,
    bound_objective_general,
    delay_bound,
    log_mgf_c,
    mgf_c,
    service_mgf_eta,
    service_rate_rho_s,
)
from risdelay.traffic import ObservationWindow, TrafficModel, generate_poisson_trace

T_SLOT = 0.25e-3
BITS_PER_ETA = 12 * 60e3 * T_SLOT  # 180


def single_mcs_spec(eta, n_rb=4):
    return ServiceSpec(ServiceMix(1.0), np.array([0.0, 1.0]), {}, np.array([0.0, eta]), n_rb)


def channel_spec(gbar_s1=30.0, gbar_s2=5.0, lam=80.0, omega=0.5, n_rb=5):
    t = McsTable.default()
    p1 = mcs_probs(SnrModel("S1", gbar_s1), t)
    p2 = mcs_probs(SnrModel("S2", gbar_s2, lam), t)
    mix = ServiceMix(1 - omega, {0: omega} if omega else {})
    return ServiceSpec(mix, p1, {0: p2}, t.efficiencies, n_rb)


def poisson_window(rate=2000.0, seed=1, n=4000):
    tr = generate_poisson_trace(TrafficModel(rate), n, T_SLOT, RandomStream(seed))
    return ObservationWindow(tr.bits_per_tti, t_obs=n)


# ---- mixtures --------------------------------------------------------------

def test_mix_validation_and_counts():
    with pytest.raises(ValueError):
        ServiceMix(0.6, {0: 0.6})
    m = ServiceMix.from_counts({1: 3, 2: 2}, 10)
    assert m.omega_s1 == pytest.approx(0.5)
    assert dict(m.omega_s2) == {1: 0.3, 2: 0.2}
    assert ServiceMix.from_counts({}, 4).omega_s1 == 1.0


def test_spec_requires_vectors():
    with pytest.raises(ValueError):
        ServiceSpec(ServiceMix(0.5, {3: 0.5}), np.array([0.0, 1.0]), {}, np.array([0.0, 1.0]), 1)


def test_mgf_eta_limits():
    spec = channel_spec()
    assert service_mgf_eta(spec, 1e-14) == pytest.approx(1.0, abs=1e-12)
    assert service_mgf_eta(single_mcs_spec(2.5), 0.3) == pytest.approx(math.exp(-0.75), rel=1e-14)


def test_mgf_eta_double_sum_oracle():
    eta = np.array([0.0, 0.5, 1.5, 3.0])
    p1 = np.array([0.1, 0.2, 0.3, 0.4])
    pa = np.array([0.0, 0.1, 0.1, 0.8])
    pb = np.array([0.25, 0.25, 0.25, 0.25])
    mix = ServiceMix(0.2, {7: 0.5, 9: 0.3})
    spec = ServiceSpec(mix, p1, {7: pa, 9: pb}, eta, 3)
    theta = 0.37
    expected = 0.0
    for w, p in ((0.5, pa), (0.3, pb)):
        for m in range(4):
            expected += w * math.exp(-theta * eta[m]) * p[m]
    for m in range(4):
        expected += 0.2 * math.exp(-theta * eta[m]) * p1[m]
    assert service_mgf_eta(spec, theta) == pytest.approx(expected, abs=1e-14)


def test_mgf_c_cases():
    assert mgf_c(single_mcs_spec(2.0, n_rb=0), 1e-3) == 1.0
    th = 1e-4
    assert mgf_c(single_mcs_spec(2.0, n_rb=3), th) == pytest.approx(
        math.exp(-th * 3 * BITS_PER_ETA * 2.0), rel=1e-13)
    spec = channel_spec(n_rb=7)
    lm = log_mgf_c(spec, 2e-4)
    assert lm == pytest.approx(7 * math.log(service_mgf_eta(spec, 2e-4 * BITS_PER_ETA)), rel=1e-12)


def test_mgf_c_underflow():
    with pytest.raises(ServiceUnderflowError):
        mgf_c(single_mcs_spec(7.0, n_rb=100), 1.0)


def test_rho_s_cases():
    for th in (1e-7, 1e-4, 1e-2):
        assert service_rate_rho_s(single_mcs_spec(3.0, 4), th) == pytest.approx(4 * 12 * 60e3 * 3.0, rel=1e-12)
    outage = ServiceSpec(ServiceMix(1.0), np.array([1.0, 0.0]), {}, np.array([0.0, 2.0]), 5)
    assert service_rate_rho_s(outage, 1e-3) == 0.0


def test_rho_s_monotone_and_recomputed():
    spec = channel_spec()
    th = np.geomspace(1e-7, 1e-2, 60)
    rs = service_rate_rho_s(spec, th)
    assert np.all(np.diff(rs) <= 1e-9 * rs[:-1])
    p, eta = spec.mixed_probs(), spec.efficiencies
    for t, r in zip(th[::7], rs[::7]):
        direct = -spec.n_rb * math.log(float(np.sum(p * np.exp(-t * BITS_PER_ETA * eta)))) / (t * T_SLOT)
        assert r == pytest.approx(direct, rel=1e-10)
    assert rs[0] == pytest.approx(spec.mean_rate_bps(), rel=1e-4)


# ---- objective -------------------------------------------------------------

def test_general_form_reduces():
    args = (2e-4, 5e4, 3e7, 1e-3)
    assert bound_objective_general(*args) == pytest.approx(float(bound_objective(*args)), rel=1e-14)
    assert bound_objective_general(*args, sigma_a=100.0) > bound_objective_general(*args)


def test_golden_matches_dense_scan():
    win = poisson_window()
    spec = channel_spec()
    env = ArrivalEnvelope(win)
    theta = 1e-4
    rs = float(service_rate_rho_s(spec, theta))
    gap = rs - float(env(np.array([theta]))[0])
    assert gap > 0
    lo, hi = math.log(1e-12), math.log(gap / 2 * (1 - 2e-9))

    def f(x):
        return float(bound_objective(theta, math.exp(x), rs, 1e-3, T_SLOT))

    tol = 1e-8
    x_g, f_g = minimize_1d(f, lo, hi, tol=tol)
    xs = np.linspace(lo, hi, 1_000_000)
    vals = bound_objective(theta, np.exp(xs), rs, 1e-3, T_SLOT)
    k = int(np.argmin(vals))
    assert abs(x_g - xs[k]) <= max(tol * 10, xs[1] - xs[0])
    assert f_g <= vals[k] * (1 + 1e-9)


# ---- solver ----------------------------------------------------------------

def no_traffic(theta):
    return np.zeros_like(np.asarray(theta, dtype=float))


def test_no_traffic_feasible_and_eps_monotone():
    spec = channel_spec()
    r3 = delay_bound(no_traffic, spec, 1e-3)
    r2 = delay_bound(no_traffic, spec, 1e-2)
    assert r3.feasible and r2.feasible
    assert math.isfinite(r3.w_seconds) and r3.w_seconds > 0
    assert r3.w_seconds >= r2.w_seconds


def test_overload_infeasible():
    spec = single_mcs_spec(1.0, n_rb=1)  # 720 kbit/s
    win = ObservationWindow(np.full(100, 1000), t_obs=100)  # 4 Mbit/s
    r = delay_bound(win, spec, 1e-3)
    assert not r.feasible and math.isinf(r.w_seconds)


def test_result_invariants():
    win = poisson_window()
    spec = channel_spec()
    r = delay_bound(win, spec, 1e-3)
    assert r.feasible
    assert r.rho_s_at_star - r.rho_a_at_star > 2 * r.delta_star
    again = float(bound_objective(r.theta_star, r.delta_star, r.rho_s_at_star, 1e-3, T_SLOT))
    assert again == pytest.approx(r.w_seconds, rel=1e-12)
    assert delay_bound(win, spec, 1e-3) == r


def test_literal_mode_is_tighter():
    win = poisson_window()
    spec = channel_spec()
    lit = delay_bound(win, spec, 1e-3, search=SearchConfig(delta_exponent="literal"))
    per_slot = delay_bound(win, spec, 1e-3)
    assert lit.w_seconds <= per_slot.w_seconds


@pytest.mark.parametrize("mode", ["per_slot", "literal"])
def test_w_nonincreasing_in_epsilon(mode):
    win = poisson_window(seed=4)
    spec = channel_spec()
    search = SearchConfig(delta_exponent=mode)
    ws = [delay_bound(win, spec, e, search=search).w_seconds for e in (1e-5, 1e-4, 1e-3, 1e-2, 0.1)]
    assert all(a >= b * (1 - 1e-9) for a, b in zip(ws, ws[1:]))


@pytest.mark.parametrize("gain_db", [1.0, 3.0, 10.0])
def test_better_channel_never_hurts(gain_db):
    win = poisson_window(seed=6)
    base = channel_spec(gbar_s2=3.0)
    better = channel_spec(gbar_s2=3.0 * 10 ** (gain_db / 10))
    assert delay_bound(win, better, 1e-3).w_seconds <= delay_bound(win, base, 1e-3).w_seconds * (1 + 1e-9)


def test_deterministic_system():
    c_bits = 4 * BITS_PER_ETA * 2.0  # 1440 bits per TTI
    spec = single_mcs_spec(2.0, n_rb=4)
    under = ObservationWindow(np.full(50, 1000), t_obs=50, tti_duration_s=T_SLOT)
    over = ObservationWindow(np.full(50, int(c_bits) + 10), t_obs=50, tti_duration_s=T_SLOT)
    assert not delay_bound(over, spec, 1e-3).feasible
    ws = [delay_bound(under, spec, e).w_seconds for e in (1e-3, 0.5, 0.999)]
    assert all(math.isfinite(w) for w in ws)
    assert ws[0] > ws[1] > ws[2]
    assert ws[2] < 0.01 * T_SLOT


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(1, 12), st.floats(-5, 25))
def test_solver_constraints_hold(omega, n_rb, s2_db):
    win = poisson_window(rate=1500, seed=9)
    spec = channel_spec(gbar_s2=10 ** (s2_db / 10), omega=omega, n_rb=n_rb)
    r = delay_bound(win, spec, 1e-4)
    if r.feasible:
        assert r.rho_s_at_star - r.rho_a_at_star > 2 * r.delta_star
        assert 0 < r.w_seconds < math.inf


def test_config_errors():
    with pytest.raises(ValueError):
        SearchConfig(n_theta=0)
    with pytest.raises(ValueError):
        delay_bound(no_traffic, channel_spec(), 0.0)
