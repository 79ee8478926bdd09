"""Randomized point sets for Array-RQMC.

A point set holds ``n`` points in ``c + d`` dimensions. The first ``c``
coordinates are fixed sort coordinates, ordered once at build time; only the
last ``d`` coordinates are re-randomized at every chain step. Randomization
draws come from a counter-based generator keyed by ``(seed, replicate, step)``
so results do not depend on execution order.

Output coordinates are dyadic midpoints on a 2^-52 grid (or finer), so they
never hit 0 or 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Callable

import numpy as np
from numba import njit

__all__ = [
    "Family",
    "PointSetSpec",
    "RandomizedPointSet",
    "build_pointset",
    "baker",
    "stratified_k",
    "snap_stratified_n",
    "sobol_base",
    "lattice_vector",
    "keyed_rng",
    "MAX_SOBOL_DIM",
]

SOBOL_BITS = 31
OUT_BITS = 52
_OUT_SCALE = 2.0**-OUT_BITS


class Family(str, Enum):
    INDEPENDENT = "independent"
    STRATIFIED = "stratified"
    SOBOL_LMS = "sobol_lms"
    SOBOL_NUS = "sobol_nus"
    LATTICE_BAKER = "lattice_baker"


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


def stratified_k(target_n, dims):
    """Integer ``k >= 2`` whose ``k**dims`` is closest to ``target_n`` (smaller k on ties)."""
    if dims < 1 or target_n < 1:
        raise ValueError("need dims >= 1 and target_n >= 1")
    k = max(2, int(round(target_n ** (1.0 / dims))))
    best = None
    for cand in range(max(2, k - 2), k + 3):
        err = abs(cand**dims - target_n)
        if best is None or err < best[0]:
            best = (err, cand)
    return best[1]


def snap_stratified_n(target_n, dims):
    return stratified_k(target_n, dims) ** dims


def _int_root(n, dims):
    k = int(round(n ** (1.0 / dims)))
    for cand in (k - 1, k, k + 1):
        if cand >= 2 and cand**dims == n:
            return cand
    return None


@lru_cache(maxsize=None)
def _direction_table():
    text = resources.files("arrayrqmc").joinpath("data/sobol_joe_kuo.txt").read_text()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            rows.append([int(v) for v in line.split()])
    return tuple(tuple(r) for r in rows)


MAX_SOBOL_DIM = 64


def _direction_numbers(dim_index):
    """31 direction numbers (as 31-bit integers) for one Sobol' coordinate."""
    row = _direction_table()[dim_index]
    v = np.zeros(SOBOL_BITS + 1, dtype=np.int64)  # 1-based
    if row[0] == 0:
        for k in range(1, SOBOL_BITS + 1):
            v[k] = 1 << (SOBOL_BITS - k)
        return v[1:]
    s, a, ms = row[0], row[1], row[2:]
    for k in range(1, min(s, SOBOL_BITS) + 1):
        v[k] = ms[k - 1] << (SOBOL_BITS - k)
    for k in range(s + 1, SOBOL_BITS + 1):
        val = v[k - s] ^ (v[k - s] >> s)
        for l in range(1, s):
            if (a >> (s - 1 - l)) & 1:
                val ^= v[k - l]
        v[k] = val
    return v[1:]


def sobol_base(n, dims):
    """First ``n`` Sobol' points in natural (non-Gray) order, as 31-bit integers.

    Returns an ``(n, dims)`` int64 array; divide by 2^31 for coordinates.
    """
    if dims > len(_direction_table()):
        raise ValueError(f"Sobol' table covers {len(_direction_table())} dimensions, asked {dims}")
    if n > 1 << SOBOL_BITS:
        raise ValueError("too many Sobol' points")
    i = np.arange(n, dtype=np.int64)
    out = np.zeros((n, dims), dtype=np.int64)
    nbits = max(1, int(n - 1).bit_length())
    for j in range(dims):
        v = _direction_numbers(j)
        for k in range(nbits):
            out[:, j] ^= ((i >> k) & 1) * v[k]
    return out


@lru_cache(maxsize=None)
def lattice_vector(n):
    """Shipped CBC generating vector for ``n = 2^m`` points."""
    name = f"data/lattice/n{n}.txt"
    res = resources.files("arrayrqmc").joinpath(name)
    if not res.is_file():
        raise ValueError(f"no lattice generating vector shipped for n = {n}")
    z = [int(line) for line in res.read_text().splitlines() if line.strip() and not line.startswith("#")]
    return tuple(z)


def keyed_rng(seed, replicate, step, stream=0):
    """Philox generator for one (seed, replicate, step, stream) key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate), int(step), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def _uniform52(rng, shape):
    m = rng.integers(0, 1 << OUT_BITS, size=shape, dtype=np.int64)
    return (m + 0.5) * _OUT_SCALE


def baker(u):
    """Tent map: ``2u`` for ``u <= 1/2``, else ``2(1 - u)``."""
    u = np.asarray(u, dtype=float)
    out = np.where(u <= 0.5, 2.0 * u, 2.0 * (1.0 - u))
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class PointSetSpec:
    family: Family
    n: int
    sort_dims: int
    randomized_dims: int

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        n, c, d = self.n, self.sort_dims, self.randomized_dims
        if n < 1:
            raise ValueError(f"n must be positive, got {n}")
        if c < 0 or d < 1:
            raise ValueError(f"need sort_dims >= 0 and randomized_dims >= 1, got {c}, {d}")
        fam = self.family
        if fam in (Family.SOBOL_LMS, Family.SOBOL_NUS):
            if not _is_pow2(n):
                raise ValueError(f"Sobol' point sets need n = 2^e with e >= 1, got {n}")
            if self._generator_dims() > MAX_SOBOL_DIM:
                raise ValueError(f"dimension {self._generator_dims()} exceeds {MAX_SOBOL_DIM}")
        elif fam is Family.LATTICE_BAKER:
            if not _is_pow2(n):
                raise ValueError(f"lattice point sets need n = 2^e, got {n}")
            z = lattice_vector(n)
            if c + d > len(z):
                raise ValueError(f"lattice vector for n = {n} has {len(z)} dimensions, need {c + d}")
        elif fam is Family.STRATIFIED:
            if _int_root(n, c + d) is None:
                raise ValueError(f"stratified n must be k^{c + d} with k >= 2, got {n}")

    @property
    def dim(self):
        return self.sort_dims + self.randomized_dims

    @property
    def stratified_k(self):
        return _int_root(self.n, self.dim)

    def _generator_dims(self):
        # c = 1 uses the implicit (i + 0.5)/n coordinate
        return self.randomized_dims + (self.sort_dims if self.sort_dims >= 2 else 0)


class RandomizedPointSet:
    """Base class: fixed sort coordinates plus re-randomized coordinates.

    ``sort_coords`` is ``(n, c)``; ``uniforms`` is ``(n, d)`` and holds the
    current randomization.
    """

    def __init__(self, spec: PointSetSpec, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self.sort_coords = np.empty((spec.n, spec.sort_dims))
        self.uniforms = None
        self.replicate = None
        self.step = None

    @property
    def n(self):
        return self.spec.n

    def _implicit_sort_coords(self):
        col = (np.arange(self.n) + 0.5) / self.n
        return np.repeat(col[:, None], self.spec.sort_dims, axis=1)

    def _reorder(self, perm):
        self.sort_coords = self.sort_coords[perm]

    def randomize(self, replicate, step):
        rng = keyed_rng(self.seed, replicate, step)
        self.uniforms = self._draw(rng)
        self.replicate, self.step = replicate, step

    def _draw(self, rng):
        raise NotImplementedError

    def point(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"point index {i} out of range 0..{self.n - 1}")
        if self.uniforms is None:
            raise RuntimeError("point set has not been randomized yet")
        return np.concatenate([self.sort_coords[i], self.uniforms[i]])

    @property
    def points(self):
        if self.uniforms is None:
            raise RuntimeError("point set has not been randomized yet")
        return np.hstack([self.sort_coords, self.uniforms])


class IndependentPointSet(RandomizedPointSet):
    def __init__(self, spec, seed):
        super().__init__(spec, seed)
        self.sort_coords = self._implicit_sort_coords()

    def _draw(self, rng):
        return _uniform52(rng, (self.n, self.spec.randomized_dims))


class StratifiedPointSet(RandomizedPointSet):
    """One point per congruent subcube of a ``k``-grid in ``c + d`` dimensions.

    Strata are numbered row-major by point index. With ``shuffle`` (the
    default) each randomization also permutes the randomized-coordinate
    strata among the points that share the same sort-coordinate stratum, so
    every point is uniform over ``(0, 1)^d`` and the chain matching stays
    unbiased; the set of occupied subcubes is unchanged.
    """

    _FRAC_BITS = 40

    def __init__(self, spec, seed, shuffle=True):
        super().__init__(spec, seed)
        self.shuffle = shuffle
        k = spec.stratified_k
        self.k = k
        c, d = spec.sort_dims, spec.randomized_dims
        i = np.arange(self.n, dtype=np.int64)
        digits = np.empty((self.n, c + d), dtype=np.int64)
        rest = i.copy()
        for q in range(c + d - 1, -1, -1):
            digits[:, q] = rest % k
            rest //= k
        self.strata = digits[:, c:]
        if c == 1:
            self.sort_coords = ((i + 0.5) / self.n)[:, None]
        else:
            self.sort_coords = (digits[:, :c] + 0.5) / k
        self._groups = None

    def _reorder(self, perm):
        super()._reorder(perm)
        self.strata = self.strata[perm]
        self._groups = None

    def _group_labels(self):
        if self._groups is None:
            c = self.spec.sort_dims
            if c == 0:
                self._groups = np.zeros(self.n, dtype=np.int64)
            else:
                cells = np.floor(self.sort_coords * self.k).astype(np.int64)
                _, self._groups = np.unique(cells, axis=0, return_inverse=True)
                self._groups = self._groups.ravel()
        return self._groups

    def _draw(self, rng):
        strata = self.strata
        if self.shuffle:
            g = self._group_labels()
            by_index = np.lexsort((np.arange(self.n), g))
            by_random = np.lexsort((rng.random(self.n), g))
            strata = np.empty_like(self.strata)
            strata[by_index] = self.strata[by_random]
        frac_bits = self._FRAC_BITS
        m = rng.integers(0, 1 << frac_bits, size=strata.shape, dtype=np.int64)
        frac = (m + 0.5) * 2.0**-frac_bits
        return (strata + frac) / self.k


@njit(cache=True)
def _mix64(x):
    # splitmix64 finalizer; uint64 arithmetic wraps
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@njit(cache=True)
def _lms_kernel(base, cols, shifts):
    n, d = base.shape
    out = np.empty((n, d), dtype=np.int64)
    # byte lookup tables: tab[g, v] = XOR of the columns selected by byte g of x
    tab = np.zeros((4, 256), dtype=np.int64)
    for j in range(d):
        for g in range(4):
            for v in range(1, 256):
                low = v & (v - 1)
                k = 0
                while (v >> k) & 1 == 0:
                    k += 1
                b = 8 * g + k  # bit b of x is input digit 31 - b
                col = cols[j, SOBOL_BITS - 1 - b] if b < SOBOL_BITS else 0
                tab[g, v] = tab[g, low] ^ col
        for i in range(n):
            x = base[i, j]
            out[i, j] = (shifts[j] ^ tab[0, x & 255] ^ tab[1, (x >> 8) & 255]
                         ^ tab[2, (x >> 16) & 255] ^ tab[3, (x >> 24) & 255])
    return out


@njit(cache=True)
def _nus_kernel(base, keys):
    n, d = base.shape
    out = np.empty((n, d), dtype=np.int64)
    one = np.uint64(1)
    for i in range(n):
        for j in range(d):
            x = np.uint64(base[i, j])
            flips = np.uint64(0)
            for depth in range(1, SOBOL_BITS + 1):
                # tree node: marker bit above the depth-1 leading original digits
                node = (x >> np.uint64(SOBOL_BITS - depth + 1)) | (one << np.uint64(depth - 1))
                bit = _mix64(_mix64(node) ^ keys[j]) >> np.uint64(63)
                flips |= bit << np.uint64(SOBOL_BITS - depth)
            out[i, j] = np.int64(x ^ flips)
    return out


class SobolPointSet(RandomizedPointSet):
    """Sobol' points with left matrix scrambling + digital shift, or nested uniform scrambling."""

    def __init__(self, spec, seed):
        super().__init__(spec, seed)
        c, d = spec.sort_dims, spec.randomized_dims
        gen_dims = spec._generator_dims()
        base = sobol_base(self.n, gen_dims)
        if c >= 2:
            self.sort_coords = base[:, :c] * 2.0**-SOBOL_BITS + 0.5 / self.n
            self.base = base[:, c:]
        else:
            self.sort_coords = self._implicit_sort_coords()
            self.base = base
        self.scramble = "lms" if spec.family is Family.SOBOL_LMS else "nus"
        assert self.base.shape[1] == d

    def _reorder(self, perm):
        super()._reorder(perm)
        self.base = self.base[perm]

    def _draw(self, rng):
        if self.scramble == "lms":
            return self._lms(rng)
        return self._nus(rng)

    def _lms(self, rng):
        d = self.base.shape[1]
        # column l of a lower-triangular OUT_BITS x 31 matrix with unit
        # diagonal, packed as an integer (most significant bit = row 1)
        diag = OUT_BITS - 1 - np.arange(SOBOL_BITS, dtype=np.int64)
        low = rng.integers(0, 1 << OUT_BITS, size=(d, SOBOL_BITS), dtype=np.int64)
        cols = (low & ((np.int64(1) << diag) - 1)) | (np.int64(1) << diag)
        shifts = rng.integers(0, 1 << OUT_BITS, size=d, dtype=np.int64)
        return (_lms_kernel(self.base, cols, shifts) + 0.5) * _OUT_SCALE

    def _nus(self, rng):
        n, d = self.base.shape
        extra = OUT_BITS - SOBOL_BITS
        keys = rng.integers(0, 1 << 63, size=d, dtype=np.uint64)
        tail = rng.integers(0, 1 << extra, size=(n, d), dtype=np.int64)
        y = _nus_kernel(self.base, keys)
        return (((y << extra) | tail) + 0.5) * _OUT_SCALE


class LatticePointSet(RandomizedPointSet):
    """Rank-1 lattice, random shift modulo 1, then the baker transformation."""

    def __init__(self, spec, seed):
        super().__init__(spec, seed)
        c, d = spec.sort_dims, spec.randomized_dims
        n = self.n
        z = np.asarray(lattice_vector(n), dtype=np.int64)
        i = np.arange(n, dtype=np.int64)
        if c >= 2:
            self.sort_coords = ((i[:, None] * z[None, :c]) % n) / n + 0.5 / n
            zr = z[c:c + d]
        else:
            self.sort_coords = self._implicit_sort_coords()
            # z[0] = 1 is the implicit i/n coordinate when c == 1
            zr = z[c:c + d]
        self.z = zr
        self.m = n.bit_length() - 1
        self.base = (i[:, None] * zr[None, :]) % n

    def _reorder(self, perm):
        super()._reorder(perm)
        self.base = self.base[perm]

    def shifted(self, rng):
        """Shifted (pre-baker) coordinates on the 2^-52 grid, as integers."""
        d = self.base.shape[1]
        shift = rng.integers(0, 1 << OUT_BITS, size=d, dtype=np.int64)
        mask = (1 << OUT_BITS) - 1
        return ((self.base << (OUT_BITS - self.m)) + shift[None, :]) & mask

    def _draw(self, rng):
        u = (self.shifted(rng) + 0.5) * _OUT_SCALE
        return baker(u)


_FAMILIES = {
    Family.INDEPENDENT: IndependentPointSet,
    Family.STRATIFIED: StratifiedPointSet,
    Family.SOBOL_LMS: SobolPointSet,
    Family.SOBOL_NUS: SobolPointSet,
    Family.LATTICE_BAKER: LatticePointSet,
}


def build_pointset(spec: PointSetSpec, seed: int, presort: Callable | None = None) -> RandomizedPointSet:
    """Build the deterministic base of a point set.

    ``presort`` maps the ``(n, c)`` sort coordinates to a permutation; it is
    applied once when ``c >= 2`` so that points sit in the order the engine's
    multivariate sort assigns to chains.
    """
    ps = _FAMILIES[spec.family](spec, seed)
    if presort is not None and spec.sort_dims >= 2:
        perm = np.asarray(presort(ps.sort_coords))
        ps._reorder(perm)
    return ps


def log2_int(n):
    m = int(math.log2(n))
    return m if 1 << m == n else None
