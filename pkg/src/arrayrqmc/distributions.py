"""Inverse CDFs used by the chain transitions.

Every variate in the simulation is produced by inversion so that the map from
uniforms to states stays monotone. Functions accept scalars or numpy arrays
and return the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "GammaSpec",
    "CorrelationSpec",
    "inv_normal_cdf",
    "inv_gamma_cdf",
    "correlated_normal_pair",
]


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a distribution."""


@dataclass(frozen=True)
class GammaSpec:
    shape: float
    scale: float

    def __post_init__(self):
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise DomainError(f"gamma shape must be > 0, got {self.shape}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"gamma scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class CorrelationSpec:
    rho: float

    def __post_init__(self):
        if not (-1.0 <= self.rho <= 1.0):
            raise DomainError(f"correlation must lie in [-1, 1], got {self.rho}")


def _check_open_unit(u, name="u"):
    u = np.asarray(u, dtype=float)
    # written so that NaN fails too
    if not np.all((u > 0.0) & (u < 1.0)):
        bad = u[~((u > 0.0) & (u < 1.0))]
        raise DomainError(f"{name} must lie in the open interval (0, 1); got {bad.flat[0]!r}")
    return u


def _unwrap(x, like):
    return x.item() if np.ndim(like) == 0 else x


# Acklam's rational approximation, relative error < 1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(u):
    x = np.empty_like(u)
    lo = u < _P_LOW
    hi = u > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = u[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    x[mid] = num / den

    for mask, sign, tail in ((lo, 1.0, u[lo]), (hi, -1.0, 1.0 - u[hi])):
        q = np.sqrt(-2.0 * np.log(tail))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[mask] = sign * num / den
    return x


def inv_normal_cdf(u):
    """Standard normal quantile.

    Rational initial guess followed by one Halley step against ``erfc``; the
    result satisfies ``|Phi(z) - u| <= 1e-12`` across (0, 1).

    Raises
    ------
    DomainError
        If any ``u`` is not strictly inside (0, 1).
    """
    u_arr = np.atleast_1d(_check_open_unit(u))
    x = _acklam(u_arr)
    # Halley refinement; the residual is taken on the smaller tail so that
    # upper-tail points keep their relative accuracy.
    upper = u_arr > 0.5
    tail = np.where(upper, 1.0 - u_arr, u_arr)
    xs = np.where(upper, -x, x)
    e = 0.5 * special.erfc(-xs / np.sqrt(2.0)) - tail
    t = e * np.sqrt(2.0 * np.pi) * np.exp(0.5 * xs * xs)
    xs = xs - t / (1.0 + 0.5 * xs * t)
    x = np.where(upper, -xs, xs)
    return _unwrap(x, u)


def _gamma_lower_bound_log(u, a):
    # P(a, x) <= x^a / Gamma(a+1), so this x never overshoots the root
    return (np.log(u) + special.gammaln(a + 1.0)) / a


def inv_gamma_cdf(u, spec: GammaSpec, tol=1e-13, max_iter=100):
    """Quantile of Gamma(shape, scale) by safeguarded Newton-Halley iteration.

    The iteration runs on ``t = log(x)`` with a bracket that is narrowed at
    every step; proposals falling outside the bracket are replaced by
    bisection. Converged when ``|P(a, x) - u| <= tol``.

    Quantiles below the smallest positive double come back as 0.
    """
    if not isinstance(spec, GammaSpec):
        raise DomainError("spec must be a GammaSpec")
    u_arr = np.atleast_1d(_check_open_unit(u)).astype(float)
    a = float(spec.shape)
    lgam = special.gammaln(a)

    lo = _gamma_lower_bound_log(u_arr, a)
    # Wilson-Hilferty guess, only usable where it stays positive
    z = _acklam(u_arr)
    wh = a * (1.0 - 1.0 / (9.0 * a) + z / (3.0 * np.sqrt(a))) ** 3
    t = np.where(wh > np.exp(np.minimum(lo, 700.0)), np.log(np.maximum(wh, 1e-300)), lo)

    hi = np.log(np.maximum(np.exp(np.minimum(lo, 700.0)) * 2.0, a + 10.0 * np.sqrt(a) + 10.0))
    need = special.gammainc(a, np.exp(hi)) < u_arr
    while np.any(need):
        hi[need] += np.log(2.0)
        need = special.gammainc(a, np.exp(hi)) < u_arr

    t = np.clip(t, lo, hi)
    # far upper tail works with Q = 1 - P, where 1 - u is exact
    upper = u_arr > 1.0 - 1e-6
    target = np.where(upper, 1.0 - u_arr, u_arr)
    active = np.arange(u_arr.size)
    for _ in range(max_iter):
        if active.size == 0:
            break
        ta = t[active]
        xa = np.exp(ta)
        up = upper[active]
        resid = special.gammainc(a, xa) - target[active]
        if up.any():
            resid[up] = target[active][up] - special.gammaincc(a, xa[up])
        done = np.abs(resid) <= tol
        # shrink bracket with the sign of the residual
        lo_a = np.where(resid < 0, ta, lo[active])
        hi_a = np.where(resid > 0, ta, hi[active])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            dens = np.exp(a * ta - xa - lgam)  # dP/dt
            newton = resid / dens
            # Halley correction, d2P/dt2 = dens * (a - x)
            step = newton / (1.0 - 0.5 * newton * (a - xa))
        prop = ta - step
        bad = ~np.isfinite(prop) | (prop < lo_a) | (prop > hi_a)
        # converged points keep the last refinement unless it left the bracket
        prop = np.where(bad, np.where(done, ta, 0.5 * (lo_a + hi_a)), prop)
        # bracket collapsed to float resolution: accept
        done |= (hi_a - lo_a) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(ta))
        t[active] = prop
        lo[active] = lo_a
        hi[active] = hi_a
        active = active[~done]
    x = np.exp(t) * spec.scale
    return _unwrap(x, u)


def correlated_normal_pair(u1, u2, corr: CorrelationSpec):
    """Map two independent uniforms to standard normals with correlation ``rho``."""
    rho = corr.rho if isinstance(corr, CorrelationSpec) else CorrelationSpec(float(corr)).rho
    z1 = inv_normal_cdf(u1)
    w = inv_normal_cdf(u2)
    z2 = rho * z1 + np.sqrt(1.0 - rho * rho) * w
    return z1, z2
