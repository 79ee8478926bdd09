"""Fast built-in checks behind ``arrayrqmc selftest`` (a few seconds)."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import special

from .distributions import GammaSpec, inv_gamma_cdf, inv_normal_cdf
from .models import HestonChain, OuChain, VgChain
from .pointsets import Family, PointSetSpec, build_pointset
from .sorts import batch_sort, hilbert_index, split_sort


def _normal_roundtrip():
    u = np.random.default_rng(1).random(10_000)
    z = inv_normal_cdf(u)
    return np.max(np.abs(special.ndtr(z) - u)) <= 1e-12


def _gamma_roundtrip():
    u = np.random.default_rng(2).random(10_000)
    spec = GammaSpec((24 / 365) / 0.3, 0.3)
    x = inv_gamma_cdf(u, spec)
    return np.max(np.abs(special.gammainc(spec.shape, x / spec.scale) - u)) <= 1e-10


def _sobol_nets():
    for fam in (Family.SOBOL_LMS, Family.SOBOL_NUS):
        for m in range(1, 11):
            ps = build_pointset(PointSetSpec(fam, 1 << m, 1, 2), seed=m)
            ps.randomize(0, 1)
            for j in range(2):
                cells = np.floor(ps.uniforms[:, j] * (1 << m)).astype(int)
                if np.unique(cells).size != 1 << m:
                    return False
    return True


def _strata():
    ps = build_pointset(PointSetSpec(Family.STRATIFIED, 5**3, 1, 2), seed=3)
    for step in range(1, 4):
        ps.randomize(0, step)
        cells = np.floor(ps.points * 5).astype(int)
        if len({tuple(c) for c in cells}) != 125:
            return False
    return True


def _split_batch():
    keys = np.array([[3, 1], [1, 4], [2, 2], [4, 3]], dtype=float)
    return list(split_sort(keys)) == [2, 1, 0, 3] == list(batch_sort(keys, [2, 2]))


def _hilbert():
    for p in range(1, 5):
        cells = np.array(list(itertools.product(range(1 << p), repeat=2)))
        h = hilbert_index(cells, p)
        if sorted(h.tolist()) != list(range(1 << (2 * p))):
            return False
        path = cells[np.argsort(h)]
        if np.any(np.abs(np.diff(path, axis=0)).sum(axis=1) != 1):
            return False
    return True


def _zero_noise_steps():
    h = HestonChain()
    s = h.advance(h.initial(1), np.array([0.5]), np.array([0.5]))
    o = OuChain()
    t = o.advance(o.initial(1), np.array([0.5]), np.array([0.5]))
    return math.isclose(s.s[0], 100.3125, rel_tol=1e-14) and math.isclose(t.v[0], 0.1525, rel_tol=1e-14)


def _vg_martingale():
    ch = VgChain()
    st = ch.initial(1 << 16)
    rng = np.random.default_rng(4)
    for _ in range(ch.tau):
        st = ch.advance(st, rng.random(1 << 16), rng.random(1 << 16))
    disc = math.exp(-ch.params.r * ch.params.maturity) * ch.sort_keys(st)[:, 0]
    return abs(disc.mean() - ch.params.s0) <= 4 * disc.std() / math.sqrt(disc.size)


CHECKS = [
    ("normal inversion round trip", _normal_roundtrip),
    ("gamma inversion round trip", _gamma_roundtrip),
    ("Sobol' LMS/NUS dyadic equidistribution", _sobol_nets),
    ("stratified one point per subcube", _strata),
    ("split sort equals 2x2 batch sort", _split_batch),
    ("Hilbert bijectivity and locality", _hilbert),
    ("Heston/OU zero-noise steps", _zero_noise_steps),
    ("VG discounted price is a martingale", _vg_martingale),
]


def run_selftest(verbose=True):
    ok = True
    for name, fn in CHECKS:
        try:
            passed = bool(fn())
        except Exception as exc:  # a crash is a failure, reported inline
            passed = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}")
    return ok
