"""Option-pricing Markov chains: variance gamma, Heston and OU log-volatility.

Step functions act on state dataclasses whose fields may be scalars or equal
length arrays, so one call advances a single chain or all ``n`` of them.
Each step consumes two uniforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .distributions import CorrelationSpec, GammaSpec, inv_gamma_cdf, inv_normal_cdf, correlated_normal_pair

__all__ = [
    "ParameterError",
    "ConsistencyError",
    "Option",
    "VgParams",
    "VgState",
    "HestonParams",
    "HestonState",
    "OuParams",
    "OuState",
    "vg_omega",
    "vg_step",
    "vg_price",
    "heston_step",
    "ou_step",
    "payoff_european",
    "payoff_asian",
    "ChainModel",
    "VgChain",
    "HestonChain",
    "OuChain",
    "make_chain",
]

UNIFORMS_PER_STEP = 2


class ParameterError(ValueError):
    pass


class ConsistencyError(RuntimeError):
    pass


class Option(str, Enum):
    EUROPEAN = "european"
    ASIAN = "asian"


def _vg_times():
    return tuple(24.0 * j / 365.0 for j in range(1, 11))


@dataclass(frozen=True)
class VgParams:
    theta: float = -0.1436
    sigma: float = 0.12136
    nu: float = 0.3
    r: float = 0.1
    s0: float = 100.0
    strike: float = 100.0
    obs_times: tuple = field(default_factory=_vg_times)

    def __post_init__(self):
        object.__setattr__(self, "obs_times", tuple(float(t) for t in self.obs_times))
        if self.sigma < 0 or self.nu <= 0:
            raise ParameterError("need sigma >= 0 and nu > 0")
        if self.s0 <= 0 or self.strike <= 0:
            raise ParameterError("s0 and strike must be positive")
        t = np.asarray(self.obs_times)
        if t.size == 0 or t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ParameterError("obs_times must be positive and strictly increasing")
        vg_omega(self)

    @property
    def tau(self):
        return len(self.obs_times)

    @property
    def maturity(self):
        return self.obs_times[-1]

    @property
    def omega(self):
        return vg_omega(self)


def vg_omega(p: VgParams):
    """Martingale correction ``ln(1 - theta nu - sigma^2 nu / 2) / nu``."""
    arg = 1.0 - p.theta * p.nu - 0.5 * p.sigma**2 * p.nu
    if not arg > 0:
        raise ParameterError(f"1 - theta*nu - sigma^2*nu/2 = {arg} must be positive")
    return math.log(arg) / p.nu


@dataclass(frozen=True)
class VgState:
    y: object
    running_avg: object
    step: int


def vg_step(state: VgState, u1, u2, p: VgParams) -> VgState:
    j = state.step + 1
    if j > p.tau:
        raise ConsistencyError(f"VG chain already at its last step {p.tau}")
    t_prev = p.obs_times[j - 2] if j > 1 else 0.0
    t_j = p.obs_times[j - 1]
    delta = inv_gamma_cdf(u1, GammaSpec((t_j - t_prev) / p.nu, p.nu))
    z = inv_normal_cdf(u2)
    y = state.y + p.theta * delta + p.sigma * np.sqrt(delta) * z
    s = p.s0 * np.exp((p.r + p.omega) * t_j + y)
    avg = ((j - 1) * state.running_avg + s) / j
    return VgState(y, avg, j)


def vg_price(state: VgState, p: VgParams):
    t = p.obs_times[state.step - 1] if state.step > 0 else 0.0
    return p.s0 * np.exp((p.r + p.omega) * t + state.y)


class _EulerGrid:
    """Shared grid logic for the Heston and OU parameter sets."""

    def _check_grid(self):
        if self.maturity <= 0 or self.tau < 1:
            raise ParameterError("need maturity > 0 and tau >= 1")
        if self.s0 <= 0 or self.strike <= 0:
            raise ParameterError("s0 and strike must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.obs_times is None:
            times = tuple(self.maturity * (k + 1) / self.tau for k in range(self.tau))
        else:
            times = tuple(float(t) for t in self.obs_times)
        object.__setattr__(self, "obs_times", times)
        steps = []
        for t in times:
            k = t / self.delta
            if abs(k - round(k)) > 1e-9 * max(1.0, k) or not 1 <= round(k) <= self.tau:
                raise ParameterError(f"observation time {t} is not a grid multiple of delta = {self.delta}")
            steps.append(int(round(k)))
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ParameterError("obs_times must be strictly increasing")
        object.__setattr__(self, "_obs_steps", frozenset(steps))

    @property
    def delta(self):
        return self.maturity / self.tau

    @property
    def n_obs(self):
        return len(self.obs_times)

    def is_observation(self, step):
        return step in self._obs_steps


@dataclass(frozen=True)
class HestonParams(_EulerGrid):
    r: float = 0.05
    sigma2: float = 0.04
    lam: float = 5.0
    xi: float = 0.25
    rho: float = -0.5
    v0: float = 0.04
    s0: float = 100.0
    strike: float = 100.0
    maturity: float = 1.0
    tau: int = 16
    obs_times: tuple | None = None

    def __post_init__(self):
        if self.sigma2 <= 0 or self.lam <= 0 or self.xi <= 0 or self.v0 < 0:
            raise ParameterError("need sigma2, lam, xi > 0 and v0 >= 0")
        self._check_grid()


@dataclass(frozen=True)
class OuParams(_EulerGrid):
    r: float = 0.05
    b: float = 0.4
    alpha: float = 5.0
    sigma: float = 0.2
    rho: float = -0.5
    v0: float = 0.04
    s0: float = 100.0
    strike: float = 100.0
    maturity: float = 1.0
    tau: int = 16
    obs_times: tuple | None = None
    literal_price_recurrence: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.sigma < 0:
            raise ParameterError("need alpha >= 0 and sigma >= 0")
        self._check_grid()
        if not self.alpha * self.delta < 1.0:
            raise ParameterError(f"alpha * delta = {self.alpha * self.delta} must be < 1")


@dataclass(frozen=True)
class HestonState:
    s: object
    v: object
    running_avg: object
    n_obs: int
    step: int


# same layout; v is the log-volatility level and may be negative
OuState = HestonState


def _observe(state, s_new, j, p):
    if not p.is_observation(j):
        return state.running_avg, state.n_obs
    k = state.n_obs + 1
    return state.running_avg + (s_new - state.running_avg) / k, k


def heston_step(state: HestonState, u1, u2, p: HestonParams) -> HestonState:
    j = state.step + 1
    if j > p.tau:
        raise ConsistencyError(f"chain already at its last step {p.tau}")
    z1, z2 = correlated_normal_pair(u1, u2, CorrelationSpec(p.rho))
    d = p.delta
    root = np.sqrt(state.v * d)
    v = np.maximum(0.0, p.sigma2 + math.exp(-p.lam * d) * (state.v - p.sigma2 + p.xi * root * z2))
    s = (1.0 + p.r * d) * state.s + root * state.s * z1
    avg, k = _observe(state, s, j, p)
    return HestonState(s, v, avg, k, j)


def ou_step(state: OuState, u1, u2, p: OuParams) -> OuState:
    j = state.step + 1
    if j > p.tau:
        raise ConsistencyError(f"chain already at its last step {p.tau}")
    z1, z2 = correlated_normal_pair(u1, u2, CorrelationSpec(p.rho))
    d = p.delta
    sq = math.sqrt(d)
    v = p.alpha * d * p.b + (1.0 - p.alpha * d) * state.v + p.sigma * sq * z2
    diffusion = np.exp(state.v) * sq * z1
    if not p.literal_price_recurrence:
        diffusion = diffusion * state.s
    s = state.s + p.r * d * state.s + diffusion
    avg, k = _observe(state, s, j, p)
    return HestonState(s, v, avg, k, j)


def _terminal_step(p):
    return p.tau


def payoff_european(terminal, p):
    """Discounted call payoff on the terminal price."""
    if terminal.step != _terminal_step(p):
        raise ConsistencyError(f"payoff requested at step {terminal.step}, expected {_terminal_step(p)}")
    s = vg_price(terminal, p) if isinstance(terminal, VgState) else terminal.s
    return math.exp(-p.r * p.maturity) * np.maximum(s - p.strike, 0.0)


def payoff_asian(terminal, p):
    """Discounted call payoff on the average over the observation times."""
    if terminal.step != _terminal_step(p):
        raise ConsistencyError(f"payoff requested at step {terminal.step}, expected {_terminal_step(p)}")
    if isinstance(terminal, HestonState) and terminal.n_obs != p.n_obs:
        raise ConsistencyError(f"{terminal.n_obs} observations recorded, expected {p.n_obs}")
    return math.exp(-p.r * p.maturity) * np.maximum(terminal.running_avg - p.strike, 0.0)


def _take(x, perm):
    return x[perm] if np.ndim(x) else x


class ChainModel:
    """One model plus one option, viewed as a vectorized Markov chain.

    Subclasses supply ``initial``, ``advance`` and the key views. Keys are
    ``(n, c)`` float arrays.
    """

    name = ""
    d = UNIFORMS_PER_STEP

    def __init__(self, params, option):
        self.params = params
        self.option = Option(option)

    @property
    def tau(self):
        return self.params.tau

    def initial(self, n):
        raise NotImplementedError

    def advance(self, state, u1, u2):
        raise NotImplementedError

    def take(self, state, perm):
        return replace(state, **{f: _take(getattr(state, f), perm)
                                 for f in state.__dataclass_fields__ if f not in ("step", "n_obs")})

    def sort_keys(self, state):
        raise NotImplementedError

    def linear_keys(self, state):
        raise NotImplementedError

    @property
    def sort_dims(self):
        return self.sort_keys(self.initial(1)).shape[1]

    def payoff(self, state):
        fn = payoff_european if self.option is Option.EUROPEAN else payoff_asian
        return np.asarray(fn(state, self.params), dtype=float)


class VgChain(ChainModel):
    name = "vg"

    def __init__(self, params=None, option=Option.ASIAN):
        super().__init__(params or VgParams(), option)

    def initial(self, n):
        return VgState(np.zeros(n), np.zeros(n), 0)

    def advance(self, state, u1, u2):
        return vg_step(state, u1, u2, self.params)

    def sort_keys(self, state):
        return np.column_stack([vg_price(state, self.params), state.running_avg])

    def linear_keys(self, state):
        return self.sort_keys(state)


class _EulerChain(ChainModel):
    def initial(self, n):
        p = self.params
        return HestonState(np.full(n, p.s0), np.full(n, p.v0), np.zeros(n), 0, 0)

    def sort_keys(self, state):
        cols = [state.s, state.v]
        if self.option is Option.ASIAN:
            cols.append(state.running_avg)
        return np.column_stack(cols)

    def linear_keys(self, state):
        if self.option is Option.EUROPEAN:
            return np.asarray(state.s, dtype=float)[:, None]
        return np.column_stack([state.s, state.running_avg])


class HestonChain(_EulerChain):
    name = "heston"

    def __init__(self, params=None, option=Option.EUROPEAN):
        super().__init__(params or HestonParams(), option)

    def advance(self, state, u1, u2):
        return heston_step(state, u1, u2, self.params)


class OuChain(_EulerChain):
    name = "ou"

    def __init__(self, params=None, option=Option.EUROPEAN):
        super().__init__(params or OuParams(), option)

    def advance(self, state, u1, u2):
        return ou_step(state, u1, u2, self.params)


_PARAMS = {"vg": (VgChain, VgParams), "heston": (HestonChain, HestonParams), "ou": (OuChain, OuParams)}


def make_chain(model, option, params=None):
    """Chain for a model name with optional parameter overrides (a dict)."""
    key = str(model).lower()
    if key not in _PARAMS:
        raise ParameterError(f"unknown model {model!r}; expected one of {sorted(_PARAMS)}")
    chain_cls, params_cls = _PARAMS[key]
    overrides = dict(params or {})
    try:
        p = params_cls(**overrides)
    except TypeError as exc:
        raise ParameterError(f"bad {key} parameters: {exc}") from None
    return chain_cls(p, option)
