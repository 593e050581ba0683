"""Independent estimate of the giant-cluster fraction for 2D bond percolation.

Uses numpy RNG + scipy.sparse.csgraph (no shared code with the C++ library).
Usage: python3 percolation_m.py p L seeds
"""
import sys

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


def giant_fraction(p, L, rng):
    n = L * L
    idx = np.arange(n).reshape(L, L)  # idx[y, x]
    right = np.roll(idx, -1, axis=1)
    up = np.roll(idx, -1, axis=0)
    src = np.concatenate([idx.ravel(), idx.ravel()])
    dst = np.concatenate([right.ravel(), up.ravel()])
    keep = rng.random(src.size) < p
    a = coo_matrix((np.ones(keep.sum()), (src[keep], dst[keep])), shape=(n, n))
    _, lab = connected_components(a, directed=False)
    touched = np.zeros(n, bool)
    touched[src[keep]] = True
    touched[dst[keep]] = True
    counts = np.bincount(lab[touched], minlength=lab.max() + 1)
    return counts.max() / n if counts.size else 0.0


if __name__ == "__main__":
    p, L, seeds = float(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3])
    vals = [giant_fraction(p, L, np.random.default_rng(1000 + s)) for s in range(seeds)]
    vals = np.array(vals)
    print(f"p={p} L={L} seeds={seeds} mean={vals.mean():.6f} "
          f"sd={vals.std(ddof=1):.6f} se={vals.std(ddof=1)/np.sqrt(seeds):.6f}")
