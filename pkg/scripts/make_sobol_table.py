"""Write the Joe-Kuo (new-joe-kuo-6.21201) direction numbers as plain text.

The table bundled with scipy is the source; the output format is one line per
dimension, ``s a m_1 ... m_s`` in decimal, with the first dimension written as
``0 0`` (identity generator matrix).

    python scripts/make_sobol_table.py src/arrayrqmc/data/sobol_joe_kuo.txt --dims 64
"""

import argparse
import os

import numpy as np
import scipy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--dims", type=int, default=64)
    args = ap.parse_args()

    npz = np.load(os.path.join(os.path.dirname(scipy.__file__), "stats", "_sobol_direction_numbers.npz"))
    poly, vinit = npz["poly"], npz["vinit"]
    lines = [
        "# Sobol' direction numbers, Joe & Kuo (2008) new-joe-kuo-6.21201.",
        "# One line per dimension: s a m_1 ... m_s",
        "#   s   degree of the primitive polynomial",
        "#   a   its interior coefficients as a binary number",
        "#   m_k initial odd integers, m_k < 2^k",
        "# The first dimension (identity matrix) is written as '0 0'.",
        "0 0",
    ]
    for j in range(1, args.dims):
        p = int(poly[j])
        s = p.bit_length() - 1
        a = (p >> 1) & ((1 << (s - 1)) - 1)
        m = [int(v) for v in vinit[j][:s]]
        lines.append(" ".join(str(v) for v in [s, a, *m]))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
