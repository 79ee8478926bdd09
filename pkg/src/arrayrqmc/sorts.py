"""Orderings that match chain states to RQMC points.

Every sort returns a permutation ``perm`` in argsort convention:
``perm[i]`` is the index of the state placed at sorted position ``i``.
Ties are always broken by the original index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from numba import njit
from scipy.special import expit

__all__ = [
    "SortKind",
    "LogisticMapSpec",
    "SortStrategy",
    "split_sort",
    "batch_sort",
    "logistic_map",
    "hilbert_index",
    "hilbert_sort",
    "linear_map_sort",
    "default_batch_factors",
]


class SortKind(str, Enum):
    SPLIT = "split"
    BATCH = "batch"
    HILBERT = "hilbert"
    LINEAR_MAP = "linear_map"

    @property
    def is_multivariate(self):
        """True when points need one sort coordinate per state coordinate."""
        return self in (SortKind.SPLIT, SortKind.BATCH)


@dataclass(frozen=True)
class LogisticMapSpec:
    """Per-coordinate centring for the logistic map into (0, 1)."""

    mu: tuple
    sigma: tuple

    def __post_init__(self):
        mu = tuple(float(v) for v in np.atleast_1d(self.mu))
        sigma = tuple(float(v) for v in np.atleast_1d(self.sigma))
        if len(mu) != len(sigma):
            raise ValueError("mu and sigma must have the same length")
        if not all(s > 0 and np.isfinite(s) for s in sigma):
            raise ValueError(f"sigma must be positive, got {sigma}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self):
        return len(self.mu)

    @property
    def lower(self):
        return np.asarray(self.mu) - 2.0 * np.asarray(self.sigma)

    @property
    def upper(self):
        return np.asarray(self.mu) + 2.0 * np.asarray(self.sigma)


def _ranks(col):
    order = np.argsort(col, kind="stable")
    r = np.empty(col.shape[0], dtype=np.int64)
    r[order] = np.arange(col.shape[0])
    return r


def _as_keys(keys):
    keys = np.asarray(keys, dtype=float)
    if keys.ndim == 1:
        keys = keys[:, None]
    if keys.ndim != 2:
        raise ValueError("keys must be an (n, c) array")
    return keys


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def split_sort(keys):
    """Recursive halving, cycling through the key coordinates.

    At depth ``t`` each packet is split into a lower and an upper half by
    coordinate ``t mod c``.
    """
    keys = _as_keys(keys)
    n, c = keys.shape
    if not _is_pow2(n):
        raise ValueError(f"split sort needs n = 2^e, got n = {n}")
    ranks = [_ranks(keys[:, k]) for k in range(c)]
    order = np.arange(n)
    size, depth = n, 0
    while size > 1:
        r = ranks[depth % c][order].reshape(-1, size)
        # only membership of the halves matters; deeper levels reorder them
        part = np.argpartition(r, size // 2 - 1, axis=1)
        order = np.take_along_axis(order.reshape(-1, size), part, axis=1).ravel()
        size //= 2
        depth += 1
    return order


def batch_sort(keys, factors):
    """Hierarchical packets: ``factors[t]`` packets by coordinate ``t``."""
    keys = _as_keys(keys)
    n, c = keys.shape
    factors = [int(f) for f in factors]
    if any(f < 1 for f in factors) or int(np.prod(factors)) != n:
        raise ValueError(f"batch factors {factors} do not multiply to n = {n}")
    if len(factors) > c:
        raise ValueError(f"{len(factors)} batch factors for {c} key coordinates")
    order = np.arange(n)
    size = n
    for t, f in enumerate(factors):
        if f == 1:
            continue
        r = _ranks(keys[:, t])[order].reshape(-1, size)
        sub = size // f
        if sub == 1 or f > 16:
            idx = np.argsort(r, axis=1)
        else:
            idx = np.argpartition(r, [sub * q - 1 for q in range(1, f)], axis=1)
        order = np.take_along_axis(order.reshape(-1, size), idx, axis=1).ravel()
        size = sub
    if size > 1:
        # leftover packets ordered by original index
        order = np.sort(order.reshape(-1, size), axis=1).ravel()
    return order


def default_batch_factors(n, c):
    """Near-equal power-of-two factors for ``n = 2^e``, larger ones first."""
    if not _is_pow2(n):
        raise ValueError(f"default batch factors need n = 2^e, got {n}")
    e = n.bit_length() - 1
    base, extra = divmod(e, c)
    return [1 << (base + (1 if t < extra else 0)) for t in range(c)]


_TINY = np.nextafter(0.0, 1.0)
_ALMOST_ONE = np.nextafter(1.0, 0.0)


def logistic_map(state, spec: LogisticMapSpec):
    """Component-wise ``1 / (1 + exp(-(x - lo) / (hi - lo)))``, lo/hi = mu -/+ 2 sigma."""
    x = np.asarray(state, dtype=float)
    lo, hi = spec.lower, spec.upper
    if x.shape[-1] != spec.dim:
        raise ValueError(f"state dimension {x.shape[-1]} != logistic dimension {spec.dim}")
    y = expit((x - lo) / (hi - lo))
    return np.clip(y, _TINY, _ALMOST_ONE)


@njit(cache=True)
def _hilbert_kernel(cells, bits):
    n, dim = cells.shape
    out = np.empty(n, dtype=np.uint64)
    x = np.empty(dim, dtype=np.uint64)
    one = np.uint64(1)
    for r in range(n):
        for i in range(dim):
            x[i] = np.uint64(cells[r, i])
        q = np.uint64(1) << np.uint64(bits - 1)
        while q > one:
            p = q - one
            for i in range(dim):
                if x[i] & q:
                    x[0] ^= p
                else:
                    t = (x[0] ^ x[i]) & p
                    x[0] ^= t
                    x[i] ^= t
            q >>= one
        for i in range(1, dim):
            x[i] ^= x[i - 1]
        t = np.uint64(0)
        q = np.uint64(1) << np.uint64(bits - 1)
        while q > one:
            if x[dim - 1] & q:
                t ^= q - one
            q >>= one
        h = np.uint64(0)
        for b in range(bits - 1, -1, -1):
            for i in range(dim):
                h = (h << one) | (((x[i] ^ t) >> np.uint64(b)) & one)
        out[r] = h
    return out


def hilbert_index(cell, bits):
    """Position of integer grid cells along the Hilbert curve.

    Skilling's transpose algorithm. ``cell`` is ``(l,)`` or ``(n, l)`` with
    entries in ``[0, 2^bits)``; orientation starts at the origin and the
    first-order 2-D curve visits (0,0), (0,1), (1,1), (1,0).
    """
    arr = np.asarray(cell)
    single = arr.ndim == 1
    X = np.atleast_2d(arr).astype(np.int64)
    dim = X.shape[1]
    if bits < 1 or bits * dim > 64:
        raise ValueError(f"bits * dimension must be in [1, 64], got {bits} * {dim}")
    if np.any(X < 0) or np.any(X >= (1 << bits)):
        raise ValueError(f"cell coordinates must lie in [0, 2^{bits})")
    h = _hilbert_kernel(np.ascontiguousarray(X), bits)
    return int(h[0]) if single else h


def hilbert_sort(states, spec: LogisticMapSpec, bits=None):
    """Order states by Hilbert index of their logistic image on a 2^bits grid."""
    states = _as_keys(states)
    dim = states.shape[1]
    if bits is None:
        bits = 62 // dim
    if bits * dim > 62:
        raise ValueError("hilbert_bits * dimension must not exceed 62")
    y = logistic_map(states, spec)
    cells = np.minimum(np.floor(y * (1 << bits)), (1 << bits) - 1).astype(np.int64)
    if dim == 1:
        return np.argsort(cells[:, 0], kind="stable")
    return np.argsort(hilbert_index(cells, bits), kind="stable")


def linear_map_sort(s, sbar, j, tau):
    """Sort by ``b_j * sbar + (1 - b_j) * s`` with ``b_j = (j - 1) / (tau - 1)``."""
    if tau < 2:
        raise ValueError(f"linear map sort needs tau >= 2, got {tau}")
    if not 1 <= j <= tau:
        raise ValueError(f"step {j} outside 1..{tau}")
    b = (j - 1) / (tau - 1)
    key = b * np.asarray(sbar, dtype=float) + (1.0 - b) * np.asarray(s, dtype=float)
    return np.argsort(key, kind="stable")


@dataclass
class SortStrategy:
    """A sort kind plus whatever parameters it needs.

    ``logistic`` is either one ``LogisticMapSpec`` or a sequence indexed by
    chain step (entry ``j - 1`` is used when sorting before step ``j``).
    """

    kind: SortKind
    batch_factors: Sequence[int] | None = None
    logistic: LogisticMapSpec | Sequence[LogisticMapSpec] | None = None
    hilbert_bits: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = SortKind(self.kind)

    def logistic_for(self, step):
        if self.logistic is None:
            raise ValueError("Hilbert sort needs logistic map parameters")
        if isinstance(self.logistic, LogisticMapSpec):
            return self.logistic
        return self.logistic[step - 1]

    def permutation(self, keys, step, tau):
        """Permutation for the states ``keys`` sorted before chain step ``step``.

        ``keys`` is ``(n, c)``; for the linear map it holds ``(s, sbar)``
        columns, or a single column that is sorted directly.
        """
        keys = _as_keys(keys)
        if self.kind is SortKind.SPLIT:
            return split_sort(keys)
        if self.kind is SortKind.BATCH:
            factors = self.batch_factors or default_batch_factors(keys.shape[0], keys.shape[1])
            return batch_sort(keys, factors)
        if self.kind is SortKind.HILBERT:
            return hilbert_sort(keys, self.logistic_for(step), self.hilbert_bits)
        if keys.shape[1] == 1:
            return np.argsort(keys[:, 0], kind="stable")
        # states entering step j are X_{j-1}, mapped with h_{j-1}
        return linear_map_sort(keys[:, 0], keys[:, 1], max(step - 1, 1), tau)
