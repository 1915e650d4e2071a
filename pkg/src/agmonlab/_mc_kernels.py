"""Compiled Brownian survival counter."""

import numba
import numpy as np


@numba.njit(cache=True)
def count_survivors(rng, n_paths, offsets, r2, sd):
    """Paths B (B_0 = 0) with |B_{t_i} − offsets[i]|² ≤ r2 at every step time.

    Each path is advanced until it first leaves, so the cost follows the
    mean exit time rather than the horizon.
    """
    d = offsets.shape[1]
    ns = offsets.shape[0]
    count = 0
    pos = np.empty(d)
    for _ in range(n_paths):
        pos[:] = 0.0
        alive = True
        for i in range(ns):
            s = 0.0
            for k in range(d):
                pos[k] += rng.standard_normal() * sd
                t = pos[k] - offsets[i, k]
                s += t * t
            if s > r2:
                alive = False
                break
        if alive:
            count += 1
    return count
