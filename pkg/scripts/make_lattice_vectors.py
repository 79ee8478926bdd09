"""Component-by-component search for rank-1 lattice generating vectors.

Criterion: P_2 with order-dependent weights Gamma_k = 0.8**k, i.e.

    P_2(z) = (1/n) sum_i sum_{k>=1} Gamma_k e_k(omega(x_i1), ..., omega(x_is))

with omega(x) = 2 pi^2 (x^2 - x + 1/6) and e_k the elementary symmetric
polynomials. For n = 2^m the odd candidates are {+-5^b mod n}; since omega is
symmetric the sign drops out and the candidate scan is a cyclic correlation per
2-adic level of the point index, evaluated with FFTs.

    python scripts/make_lattice_vectors.py src/arrayrqmc/data/lattice --max-m 20 --dims 8
"""

import argparse
import os

import numpy as np

DECAY = 0.8


def omega(x):
    return 2.0 * np.pi**2 * (x * x - x + 1.0 / 6.0)


def order_weights(dims, decay=DECAY):
    return decay ** np.arange(dims + 1, dtype=float)  # index k -> Gamma_k, Gamma_0 unused


class _CBCState:
    """Elementary symmetric polynomials of the chosen coordinates, per point."""

    def __init__(self, n, dims, decay):
        self.n = n
        self.gamma = order_weights(dims, decay)
        self.e = np.zeros((dims + 1, n))
        self.e[0] = 1.0
        self.s = 0

    def q(self):
        # coefficient of omega(x_i,new) in the criterion
        k = np.arange(1, self.s + 2)
        return self.gamma[k] @ self.e[k - 1]

    def add(self, z):
        i = np.arange(self.n, dtype=np.int64)
        w = omega(((i * z) % self.n) / self.n)
        for k in range(self.s + 1, 0, -1):
            self.e[k] += w * self.e[k - 1]
        self.s += 1

    def value(self):
        k = np.arange(1, self.s + 1)
        return float(self.gamma[k] @ self.e[k].sum(axis=1)) / self.n


def p2(z, n, decay=DECAY):
    """P_2 value of the lattice with generating vector ``z`` (direct evaluation)."""
    st = _CBCState(n, len(z), decay)
    for zj in z:
        st.add(int(zj))
    return st.value()


def cbc_bruteforce(n, dims, decay=DECAY):
    """Reference CBC: scan every odd candidate <= n/2 directly, O(n^2) per dimension."""
    st = _CBCState(n, dims, decay)
    z = [1]
    st.add(1)
    i = np.arange(n, dtype=np.int64)
    for _ in range(1, dims):
        q = st.q()
        cands = np.arange(1, n // 2 + 1, 2) if n > 2 else np.array([1])
        crit = np.array([omega(((i * c) % n) / n) @ q for c in cands])
        best = int(cands[np.argmin(crit)])
        z.append(best)
        st.add(best)
    return z, st.value()


def _fast_scores(n, q):
    """Criterion (up to a constant) for every candidate z_b = 5^b mod n."""
    m = n.bit_length() - 1
    total_len = n // 4
    score = np.zeros(total_len)
    for v in range(0, m - 2):
        big_n = n >> v
        L = big_n // 4
        a = np.arange(L, dtype=np.int64)
        g = np.empty(L, dtype=np.int64)
        g[0] = 1
        for k in range(1, L):
            g[k] = (g[k - 1] * 5) % big_n
        W = omega(g / big_n)
        Q = q[(g << v)] + q[((big_n - g) << v)]
        corr = np.fft.irfft(np.fft.rfft(W) * np.conj(np.fft.rfft(Q)), n=L)
        score += corr[np.arange(total_len) % L]
        del a
    return score


def cbc_fast(n, dims, decay=DECAY):
    m = n.bit_length() - 1
    if n != 1 << m:
        raise ValueError("n must be a power of two")
    if m < 4:
        return cbc_bruteforce(n, dims, decay)
    st = _CBCState(n, dims, decay)
    z = [1]
    st.add(1)
    gens = np.empty(n // 4, dtype=np.int64)
    gens[0] = 1
    for k in range(1, n // 4):
        gens[k] = (gens[k - 1] * 5) % n
    canon = np.minimum(gens, n - gens)
    for _ in range(1, dims):
        score = _fast_scores(n, st.q())
        best_val = score.min()
        # ties (to FFT rounding) resolved by the smallest canonical z
        tie = score <= best_val + 1e-12 * max(1.0, abs(best_val))
        best = int(canon[tie].min())
        z.append(best)
        st.add(best)
    return z, st.value()


def write_vector(path, n, z, value):
    with open(path, "w") as fh:
        fh.write(f"# rank-1 lattice generating vector, n = {n}\n")
        fh.write(f"# CBC, P2 criterion, order-dependent weights {DECAY}^k; P2 = {value:.12e}\n")
        fh.write("# one line per dimension\n")
        for zj in z:
            fh.write(f"{zj}\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir")
    ap.add_argument("--min-m", type=int, default=1)
    ap.add_argument("--max-m", type=int, default=20)
    ap.add_argument("--dims", type=int, default=8)
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)
    for m in range(args.min_m, args.max_m + 1):
        n = 1 << m
        z, value = cbc_fast(n, args.dims)
        write_vector(os.path.join(args.outdir, f"n{n}.txt"), n, z, value)
        print(n, z, value)


if __name__ == "__main__":
    main()
