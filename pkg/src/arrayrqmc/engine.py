"""Array-RQMC replicate and crude Monte Carlo baseline.

Points are ordered once when the point set is built; at each step only the
chains are permuted, so the chain at sorted position ``i`` takes point ``i``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .models import ChainModel
from .pointsets import Family, PointSetSpec, build_pointset, keyed_rng
from .sorts import LogisticMapSpec, SortKind, SortStrategy, batch_sort, default_batch_factors, split_sort

__all__ = [
    "EngineConfig",
    "ReplicateResult",
    "StepError",
    "array_rqmc_replicate",
    "crude_mc_replicate",
    "estimate_logistic",
    "sort_dims_for",
    "build_config",
]

MC_STREAM = 1
PILOT_STREAM = 2
PILOT_N = 1 << 13


class StepError(RuntimeError):
    """A chain transition failed; ``chain`` is the sorted position, ``step`` is j."""

    def __init__(self, chain, step, cause):
        super().__init__(f"chain {chain} failed at step {step}: {cause}")
        self.chain = chain
        self.step = step


def sort_dims_for(model: ChainModel, kind: SortKind):
    kind = SortKind(kind)
    return model.sort_dims if kind.is_multivariate else 1


@dataclass
class EngineConfig:
    model: ChainModel
    pointset: PointSetSpec
    sort: SortStrategy

    def __post_init__(self):
        c = sort_dims_for(self.model, self.sort.kind)
        if self.pointset.randomized_dims != self.model.d:
            raise ValueError(f"point set has {self.pointset.randomized_dims} randomized dims, "
                             f"model consumes {self.model.d} per step")
        if self.pointset.sort_dims != c:
            raise ValueError(f"point set has {self.pointset.sort_dims} sort dims, {self.sort.kind.value} sort needs {c}")
        if self.sort.kind is SortKind.HILBERT and self.sort.logistic is None:
            raise ValueError("Hilbert sort needs logistic map parameters")

    @property
    def n(self):
        return self.pointset.n

    @property
    def tau(self):
        return self.model.tau

    @property
    def payoff(self):
        return self.model.option


@dataclass(frozen=True)
class ReplicateResult:
    mean: float
    n: int
    wall_time_ms: float = field(compare=False)


def _advance(model, state, u, step):
    try:
        new = model.advance(state, u[:, 0], u[:, 1])
    except Exception as exc:
        raise StepError(_failing_chain(model, state, u), step, exc) from exc
    return new


def _failing_chain(model, state, u):
    for i in range(u.shape[0]):
        try:
            model.advance(model.take(state, np.array([i])), u[i:i + 1, 0], u[i:i + 1, 1])
        except Exception:
            return i
    return -1


def _point_presort(model, sort):
    """Build-time ordering of the point sort coordinates, matching the chain sort."""
    if sort.kind is SortKind.SPLIT:
        return split_sort
    if sort.kind is SortKind.BATCH:
        def presort(coords):
            factors = sort.batch_factors or default_batch_factors(coords.shape[0], coords.shape[1])
            return batch_sort(coords, factors)
        return presort
    return None


def array_rqmc_replicate(cfg: EngineConfig, seed, replicate, observer=None) -> ReplicateResult:
    """One Array-RQMC estimate. ``observer(j, state)`` sees the states sorted before step j."""
    t0 = time.perf_counter()
    model, n, c = cfg.model, cfg.n, cfg.pointset.sort_dims
    ps = build_pointset(cfg.pointset, seed, presort=_point_presort(model, cfg.sort))
    state = model.initial(n)
    linear = cfg.sort.kind is SortKind.LINEAR_MAP
    for j in range(1, model.tau + 1):
        keys = model.linear_keys(state) if linear else model.sort_keys(state)
        perm = cfg.sort.permutation(keys, j, model.tau)
        state = model.take(state, perm)
        if observer is not None:
            observer(j, state)
        ps.randomize(replicate, j)
        state = _advance(model, state, ps.uniforms, j)
    y = model.payoff(state)
    return ReplicateResult(float(np.mean(y)), n, (time.perf_counter() - t0) * 1e3)


def _mc_uniforms(seed, replicate, step, n, d, stream=MC_STREAM):
    rng = keyed_rng(seed, replicate, step, stream)
    m = rng.integers(0, 1 << 52, size=(n, d), dtype=np.int64)
    return (m + 0.5) * 2.0**-52


def crude_mc_replicate(cfg: EngineConfig, seed, replicate) -> ReplicateResult:
    t0 = time.perf_counter()
    y = crude_mc_payoffs(cfg.model, cfg.n, seed, replicate)
    return ReplicateResult(float(np.mean(y)), cfg.n, (time.perf_counter() - t0) * 1e3)


def crude_mc_payoffs(model, n, seed, replicate, record=None, stream=MC_STREAM):
    """Independent chains; ``record`` (a list) receives the sort keys before every step."""
    state = model.initial(n)
    for j in range(1, model.tau + 1):
        if record is not None:
            record.append(model.sort_keys(state))
        state = _advance(model, state, _mc_uniforms(seed, replicate, j, n, model.d, stream), j)
    return model.payoff(state)


def estimate_logistic(model, seed, n=PILOT_N):
    """Per-step logistic parameters from a crude MC pilot run.

    Entry ``j - 1`` describes the states sorted before step ``j``. A zero
    spread (all chains equal, as at the first step) is replaced by 1.
    """
    keys = []
    crude_mc_payoffs(model, n, seed, 0, record=keys, stream=PILOT_STREAM)
    specs = []
    for k in keys:
        mu = k.mean(axis=0)
        sd = k.std(axis=0, ddof=1) if k.shape[0] > 1 else np.zeros_like(mu)
        sd = np.where(sd > 0, sd, 1.0)
        specs.append(LogisticMapSpec(tuple(mu), tuple(sd)))
    return specs


def build_config(model, family, kind, n, logistic=None, hilbert_bits=None):
    """Resolve point-set dimensions and sort parameters for one method.

    Stratified points under a multivariate sort are matched with a batch
    sort whose packets follow the stratum grid: ``k`` packets per sort
    coordinate, the last one splitting down to single chains.
    """
    family, kind = Family(family), SortKind(kind)
    c = sort_dims_for(model, kind)
    spec = PointSetSpec(family, n, c, model.d)
    if kind is SortKind.HILBERT:
        sort = SortStrategy(kind, logistic=logistic, hilbert_bits=hilbert_bits)
    elif kind.is_multivariate and family is Family.STRATIFIED:
        k = spec.stratified_k
        sort = SortStrategy(SortKind.BATCH, batch_factors=[k] * (c - 1) + [k ** (model.d + 1)])
    else:
        sort = SortStrategy(kind)
    return EngineConfig(model, spec, sort)
