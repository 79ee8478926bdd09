import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from arrayrqmc.models import (
    ConsistencyError,
    HestonChain,
    HestonParams,
    HestonState,
    OuParams,
    OuState,
    ParameterError,
    VgParams,
    VgState,
    heston_step,
    make_chain,
    ou_step,
    payoff_asian,
    payoff_european,
    vg_omega,
    vg_price,
    vg_step,
)

# 40-digit mpmath evaluations, frozen.
OMEGA_VG = 0.1335254484305733143
DISC_10 = 9.512294245007140091  # 10 * exp(-0.05)

REL = 1e-12
unit = st.floats(min_value=1e-12, max_value=1 - 1e-12)


# Independent straight-line oracles built on scipy rather than the package's inversions.

def oracle_vg(y, avg, j, u1, u2, p):
    t = (0.0,) + p.obs_times
    dt = t[j] - t[j - 1]
    delta = stats.gamma.ppf(u1, dt / p.nu, scale=p.nu)
    z = special.ndtri(u2)
    om = math.log1p(-p.theta * p.nu - p.sigma**2 * p.nu / 2) / p.nu
    y_new = y + p.theta * delta + p.sigma * math.sqrt(delta) * z
    s = p.s0 * math.exp((p.r + om) * t[j] + y_new)
    return y_new, ((j - 1) * avg + s) / j, s


def oracle_normals(u1, u2, rho):
    z1 = special.ndtri(u1)
    return z1, rho * z1 + math.sqrt(1 - rho * rho) * special.ndtri(u2)


def oracle_heston(s, v, u1, u2, p):
    z1, z2 = oracle_normals(u1, u2, p.rho)
    d = p.maturity / p.tau
    v_new = max(0.0, p.sigma2 + math.exp(-p.lam * d) * (v - p.sigma2 + p.xi * math.sqrt(v * d) * z2))
    return (1 + p.r * d) * s + math.sqrt(v * d) * s * z1, v_new


def oracle_ou(s, v, u1, u2, p):
    z1, z2 = oracle_normals(u1, u2, p.rho)
    d = p.maturity / p.tau
    v_new = p.alpha * d * p.b + (1 - p.alpha * d) * v + p.sigma * math.sqrt(d) * z2
    vol = math.exp(v) * math.sqrt(d) * z1
    if not p.literal_price_recurrence:
        vol *= s
    return s + p.r * d * s + vol, v_new


def close(a, b, rel=REL, floor=1e-14):
    return abs(a - b) <= rel * abs(b) + floor


# --- omega ---------------------------------------------------------------

def test_omega_high_precision():
    assert vg_omega(VgParams()) == pytest.approx(OMEGA_VG, rel=1e-14)
    assert abs(vg_omega(VgParams()) - 0.133528) < 5e-6


def test_omega_trivial_limits():
    assert vg_omega(VgParams(theta=0.0, sigma=0.0)) == 0.0
    p = VgParams(nu=1e-9)
    assert vg_omega(p) == pytest.approx(-p.theta - p.sigma**2 / 2, rel=1e-6)


def test_omega_bad_argument():
    with pytest.raises(ParameterError):
        VgParams(theta=10.0)


# --- VG step -------------------------------------------------------------

def test_vg_first_step_average_is_price():
    p = VgParams()
    st1 = vg_step(VgState(0.0, 123.0, 0), 0.4, 0.6, p)
    assert st1.running_avg == pytest.approx(vg_price(st1, p), rel=1e-15)


def test_vg_median_normal_gives_pure_drift():
    p = VgParams()
    st1 = vg_step(VgState(0.0, 0.0, 0), 0.7, 0.5, p)
    delta = stats.gamma.ppf(0.7, p.obs_times[0] / p.nu, scale=p.nu)
    assert st1.y == pytest.approx(p.theta * delta, rel=1e-12)


def test_vg_spec_example_u07():
    p = VgParams()
    got = vg_step(VgState(0.0, 0.0, 0), 0.7, 0.7, p)
    y, avg, s = oracle_vg(0.0, 0.0, 1, 0.7, 0.7, p)
    assert close(got.y, y) and close(got.running_avg, avg) and close(vg_price(got, p), s)


def test_vg_oracle_1000_random_inputs():
    p = VgParams()
    rng = np.random.default_rng(101)
    for _ in range(1000):
        j = int(rng.integers(1, p.tau + 1))
        y0, avg0 = rng.normal(0, 0.2), rng.uniform(50, 150)
        u1, u2 = rng.uniform(1e-9, 1 - 1e-9, size=2)
        got = vg_step(VgState(y0, avg0, j - 1), u1, u2, p)
        y, avg, s = oracle_vg(y0, avg0, j, u1, u2, p)
        assert close(got.y, y), (j, u1, u2)
        assert close(got.running_avg, avg) and close(vg_price(got, p), s)


def test_vg_past_last_step():
    p = VgParams()
    with pytest.raises(ConsistencyError):
        vg_step(VgState(0.0, 0.0, p.tau), 0.5, 0.5, p)


def test_vg_state_sufficiency():
    # carrying the gamma clock G and the Brownian part separately gives the same path
    p = VgParams()
    rng = np.random.default_rng(7)
    u = rng.random((p.tau, 2, 500))
    state = VgState(np.zeros(500), np.zeros(500), 0)
    g = np.zeros(500)
    w = np.zeros(500)
    for j in range(p.tau):
        state = vg_step(state, u[j, 0], u[j, 1], p)
        dt = p.obs_times[j] - (p.obs_times[j - 1] if j else 0.0)
        dg = stats.gamma.ppf(u[j, 0], dt / p.nu, scale=p.nu)
        w += np.sqrt(dg) * special.ndtri(u[j, 1])
        g += dg
        np.testing.assert_allclose(state.y, p.theta * g + p.sigma * w, rtol=1e-11, atol=1e-13)


@pytest.mark.slow
def test_vg_martingale_1e6_paths():
    p = VgParams()
    n = 1_000_000
    rng = np.random.default_rng(2024)
    state = VgState(np.zeros(n), np.zeros(n), 0)
    for _ in range(p.tau):
        state = vg_step(state, rng.random(n), rng.random(n), p)
    x = math.exp(-p.r * p.maturity) * vg_price(state, p)
    se = x.std(ddof=1) / math.sqrt(n)
    assert abs(x.mean() - p.s0) < 3 * se


def test_vg_zero_volatility_degenerate():
    p = VgParams(theta=0.0, sigma=0.0)
    rng = np.random.default_rng(3)
    state = VgState(0.0, 0.0, 0)
    prices = []
    for t in p.obs_times:
        state = vg_step(state, *rng.random(2), p)
        prices.append(p.s0 * math.exp(p.r * t))
        assert vg_price(state, p) == pytest.approx(prices[-1], rel=1e-14)
    assert state.running_avg == pytest.approx(np.mean(prices), rel=1e-14)


# --- Heston step ---------------------------------------------------------

def test_heston_zero_noise_step():
    p = HestonParams()
    st1 = heston_step(HestonState(100.0, 0.04, 0.0, 0, 0), 0.5, 0.5, p)
    assert st1.v == pytest.approx(0.04, rel=1e-15)
    assert st1.s == pytest.approx(100.3125, rel=1e-15)


def test_heston_zero_variance_step():
    p = HestonParams()
    st1 = heston_step(HestonState(100.0, 0.0, 0.0, 0, 0), 0.9, 0.1, p)
    assert st1.s == pytest.approx(100.3125, rel=1e-15)
    assert st1.v == pytest.approx(0.04 * (1 - math.exp(-5 / 16)), rel=1e-14)
    assert st1.v > 0


def test_heston_spec_example():
    p = HestonParams()
    got = heston_step(HestonState(100.0, 0.04, 0.0, 0, 0), 0.9, 0.1, p)
    s, v = oracle_heston(100.0, 0.04, 0.9, 0.1, p)
    assert close(got.s, s) and close(got.v, v)


def test_heston_oracle_1000_random_inputs():
    p = HestonParams()
    rng = np.random.default_rng(202)
    for _ in range(1000):
        s0, v0 = rng.uniform(20, 200), rng.uniform(0, 0.3)
        u1, u2 = rng.uniform(1e-9, 1 - 1e-9, size=2)
        got = heston_step(HestonState(s0, v0, 0.0, 0, 0), u1, u2, p)
        s, v = oracle_heston(s0, v0, u1, u2, p)
        assert close(got.s, s), (s0, v0, u1, u2)
        # v is clamped to 0; near the clamp compare against the terms that cancel
        assert close(got.v, v, floor=1e-15 * (p.sigma2 + v0)), (s0, v0, u1, u2)


@settings(max_examples=300, deadline=None)
@given(unit, unit, st.floats(0.0, 5.0), st.floats(1.0, 500.0))
def test_heston_variance_nonnegative(u1, u2, v0, s0):
    p = HestonParams(xi=2.0)
    state = HestonState(s0, v0, 0.0, 0, 0)
    for _ in range(4):
        state = heston_step(state, u1, u2, p)
        assert state.v >= 0


def test_heston_zero_volatility_degenerate():
    p = HestonParams(sigma2=1e-300, xi=1e-300, v0=0.0)
    rng = np.random.default_rng(5)
    state = HestonChain(p).initial(1)
    for j in range(1, p.tau + 1):
        state = heston_step(state, rng.random(1), rng.random(1), p)
        assert state.s[0] == pytest.approx(p.s0 * (1 + p.r * p.delta) ** j, rel=1e-12)


# --- OU step -------------------------------------------------------------

def test_ou_zero_noise_step():
    st1 = ou_step(OuState(100.0, 0.04, 0.0, 0, 0), 0.5, 0.5, OuParams())
    assert st1.v == pytest.approx(0.1525, rel=1e-14)


def test_ou_constant_when_no_reversion_or_noise():
    p = OuParams(alpha=0.0, sigma=0.0)
    state = OuState(100.0, 0.3, 0.0, 0, 0)
    for _ in range(p.tau):
        state = ou_step(state, 0.2, 0.8, p)
        assert state.v == 0.3


@pytest.mark.parametrize("literal", [False, True])
def test_ou_spec_example(literal):
    p = OuParams(literal_price_recurrence=literal)
    got = ou_step(OuState(100.0, 0.04, 0.0, 0, 0), 0.3, 0.6, p)
    s, v = oracle_ou(100.0, 0.04, 0.3, 0.6, p)
    assert close(got.s, s) and close(got.v, v)


@pytest.mark.parametrize("literal", [False, True])
def test_ou_oracle_1000_random_inputs(literal):
    p = OuParams(literal_price_recurrence=literal)
    rng = np.random.default_rng(303)
    for _ in range(1000):
        s0, v0 = rng.uniform(20, 200), rng.uniform(-1.0, 1.5)
        u1, u2 = rng.uniform(1e-9, 1 - 1e-9, size=2)
        got = ou_step(OuState(s0, v0, 0.0, 0, 0), u1, u2, p)
        s, v = oracle_ou(s0, v0, u1, u2, p)
        # cancellation in s + r d s + diffusion can leave s near 0
        assert close(got.s, s, floor=1e-13 * s0), (s0, v0, u1, u2)
        assert close(got.v, v, floor=1e-15), (s0, v0, u1, u2)


def test_ou_literal_switch_differs():
    a = ou_step(OuState(100.0, 0.4, 0.0, 0, 0), 0.9, 0.5, OuParams())
    b = ou_step(OuState(100.0, 0.4, 0.0, 0, 0), 0.9, 0.5, OuParams(literal_price_recurrence=True))
    assert a.v == b.v and a.s != b.s


def test_ou_stability_condition():
    with pytest.raises(ParameterError):
        OuParams(alpha=16.0)


def test_ou_zero_volatility_degenerate():
    p = OuParams(sigma=0.0, b=-800.0, v0=-800.0)
    rng = np.random.default_rng(9)
    state = OuState(p.s0, p.v0, 0.0, 0, 0)
    for j in range(1, p.tau + 1):
        state = ou_step(state, *rng.random(2), p)
        assert state.s == pytest.approx(p.s0 * (1 + p.r * p.delta) ** j, rel=1e-14)


# --- grids and observation accounting ------------------------------------

def test_obs_times_must_be_grid_multiples():
    with pytest.raises(ParameterError):
        HestonParams(obs_times=(0.3, 1.0))
    with pytest.raises(ParameterError):
        HestonParams(obs_times=(0.5, 0.25))


@pytest.mark.parametrize("model", ["heston", "ou"])
def test_observation_accounting(model):
    obs = (0.25, 0.5, 0.75, 1.0)
    chain = make_chain(model, "asian", {"obs_times": obs, "tau": 16})
    p = chain.params
    rng = np.random.default_rng(11)
    state = chain.initial(64)
    recorded = []
    for j in range(1, p.tau + 1):
        state = chain.advance(state, rng.random(64), rng.random(64))
        if any(abs(j * p.delta - t) < 1e-12 for t in obs):
            recorded.append(state.s.copy())
        assert state.n_obs == len(recorded)
    assert state.n_obs == p.n_obs == 4
    np.testing.assert_allclose(state.running_avg, np.mean(recorded, axis=0), rtol=1e-13)


# --- payoffs -------------------------------------------------------------

def _terminal_heston(s, avg, r=0.05, n_obs=16, **kw):
    p = HestonParams(r=r, **kw)
    return HestonState(s, 0.04, avg, n_obs, p.tau), p


def test_european_payoff_values():
    st_, p = _terminal_heston(110.0, 0.0)
    assert payoff_european(st_, p) == pytest.approx(DISC_10, rel=1e-15)
    st_, p = _terminal_heston(95.0, 0.0)
    assert payoff_european(st_, p) == 0.0
    st_, p = _terminal_heston(101.0, 0.0, r=0.0)
    assert payoff_european(st_, p) == 1.0


def test_asian_payoff_values():
    st_, p = _terminal_heston(0.0, 110.0)
    assert payoff_asian(st_, p) == pytest.approx(DISC_10, rel=1e-15)
    st_, p = _terminal_heston(0.0, 99.0)
    assert payoff_asian(st_, p) == 0.0


def test_asian_constant_path_average():
    p = HestonParams(sigma2=1e-300, xi=1e-300, v0=0.0, r=0.0)
    state = HestonChain(p, "asian").initial(1)
    for _ in range(p.tau):
        state = heston_step(state, np.array([0.3]), np.array([0.7]), p)
    assert state.running_avg[0] == pytest.approx(p.s0, rel=1e-14)


def test_asian_observation_count_checked():
    st_, p = _terminal_heston(100.0, 100.0, n_obs=15)
    with pytest.raises(ConsistencyError):
        payoff_asian(st_, p)


def test_payoff_only_at_last_step():
    p = HestonParams()
    with pytest.raises(ConsistencyError):
        payoff_european(HestonState(110.0, 0.04, 0.0, 16, 3), p)


def test_make_chain_errors():
    with pytest.raises(ParameterError):
        make_chain("bs", "asian")
    with pytest.raises(ParameterError):
        make_chain("vg", "asian", {"kappa": 1.0})
