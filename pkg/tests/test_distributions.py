import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import special

from arrayrqmc.distributions import (
    CorrelationSpec,
    DomainError,
    GammaSpec,
    correlated_normal_pair,
    inv_gamma_cdf,
    inv_normal_cdf,
)

# Frozen from a 40-digit mpmath evaluation (erfinv, and bisection on the
# regularized lower incomplete gamma function).
Z_975 = 1.959963984540054235524594430520551527956
GAMMA_MEDIAN_VG = 0.008592699865502128404370145221864815194544
VG_SHAPE = (24 / 365) / 0.3

unit = st.floats(min_value=1e-300, max_value=1.0, exclude_max=True).filter(lambda u: 0 < u < 1)


def test_normal_median_and_symmetry():
    assert inv_normal_cdf(0.5) == 0.0
    assert inv_normal_cdf(0.3) == pytest.approx(-inv_normal_cdf(0.7), abs=1e-15)


def test_normal_oracle_value():
    assert inv_normal_cdf(0.975) == pytest.approx(Z_975, abs=1e-12)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_normal_rejects_closed_endpoints(u):
    with pytest.raises(DomainError):
        inv_normal_cdf(u)


def test_normal_round_trip_10k():
    u = np.random.default_rng(10).random(10_000)
    assert np.max(np.abs(special.ndtr(inv_normal_cdf(u)) - u)) <= 1e-12


def test_normal_tails_finite_and_ordered():
    u = np.array([1e-300, 1e-100, 1e-20, 1e-10, 0.5, 1 - 1e-10, 1 - 2**-53])
    z = inv_normal_cdf(u)
    assert np.all(np.isfinite(z)) and np.all(np.diff(z) > 0)


def test_normal_monotone_dense_grid():
    u = np.linspace(1e-6, 1 - 1e-6, 200_001)
    assert np.all(np.diff(inv_normal_cdf(u)) > 0)


@given(st.lists(unit, min_size=2, max_size=20, unique=True))
def test_normal_monotone_property(us):
    us = np.sort(np.array(us))
    z = inv_normal_cdf(us)
    assert np.all(np.diff(z) >= 0)


def test_gamma_exponential_case():
    assert inv_gamma_cdf(0.5, GammaSpec(1.0, 1.0)) == pytest.approx(math.log(2.0), rel=1e-13)


def test_gamma_bisection_oracle():
    assert inv_gamma_cdf(0.5, GammaSpec(VG_SHAPE, 0.3)) == pytest.approx(GAMMA_MEDIAN_VG, abs=1e-9)


def test_gamma_lower_limit():
    spec = GammaSpec(VG_SHAPE, 0.3)
    u = np.array([1e-3, 1e-6, 1e-9, 1e-12])
    x = inv_gamma_cdf(u, spec)
    assert np.all(x >= 0) and np.all(np.diff(x) < 0)


@pytest.mark.parametrize("shape", [VG_SHAPE, 0.05, 0.5, 1.0, 3.7, 40.0, 1e4])
def test_gamma_round_trip_10k(shape):
    u = np.random.default_rng(int(shape * 1000)).random(10_000)
    x = inv_gamma_cdf(u, GammaSpec(shape, 2.0))
    assert np.max(np.abs(special.gammainc(shape, x / 2.0) - u)) <= 1e-10


def test_gamma_monotone_dense_grid():
    spec = GammaSpec(VG_SHAPE, 0.3)
    u = np.linspace(1e-4, 1 - 1e-4, 20_001)
    assert np.all(np.diff(inv_gamma_cdf(u, spec)) > 0)


@settings(max_examples=60)
@given(st.floats(0.02, 200.0), st.floats(0.01, 10.0), st.lists(st.floats(1e-8, 1 - 1e-8), min_size=2, max_size=8))
def test_gamma_monotone_property(shape, scale, us):
    us = np.unique(us)
    # the quantile must be a normal double; below that no float meets the tolerance
    assume(np.all((np.log(us) + special.gammaln(shape + 1)) / shape > math.log(1e-300)))
    x = inv_gamma_cdf(us, GammaSpec(shape, scale))
    assert np.all(np.diff(x) >= 0)
    assert np.all(np.abs(special.gammainc(shape, x / scale) - us) <= 1e-10)


@pytest.mark.parametrize("shape,scale", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (float("inf"), 1.0)])
def test_gamma_spec_invalid(shape, scale):
    with pytest.raises(DomainError):
        GammaSpec(shape, scale)


def test_gamma_rejects_bad_u():
    with pytest.raises(DomainError):
        inv_gamma_cdf(1.0, GammaSpec(1.0, 1.0))
    with pytest.raises(DomainError):
        inv_gamma_cdf(0.5, (1.0, 1.0))


def test_correlated_pair_examples():
    assert correlated_normal_pair(0.5, 0.5, CorrelationSpec(-0.5)) == (0.0, 0.0)
    z1, z2 = correlated_normal_pair(0.3, 0.5, CorrelationSpec(1.0))
    assert z1 == z2
    z1, z2 = correlated_normal_pair(0.975, 0.5, CorrelationSpec(-0.5))
    assert z1 == pytest.approx(1.95996, abs=1e-4)
    assert z2 == pytest.approx(-0.97998, abs=1e-4)
    assert z2 == pytest.approx(-Z_975 / 2, abs=1e-12)


def test_correlation_spec_bounds():
    with pytest.raises(DomainError):
        CorrelationSpec(1.01)
    with pytest.raises(DomainError):
        correlated_normal_pair(0.5, 0.0, CorrelationSpec(0.2))


@pytest.mark.parametrize("rho", [-0.5, 0.0, 0.8])
def test_correlation_statistical(rho):
    rng = np.random.default_rng(77)
    u1, u2 = rng.random(10**6), rng.random(10**6)
    z1, z2 = correlated_normal_pair(u1, u2, CorrelationSpec(rho))
    cov = np.cov(z1, z2)[0, 1]
    assert abs(cov - rho) <= 3 / math.sqrt(10**6) * math.sqrt(1 + rho**2)
