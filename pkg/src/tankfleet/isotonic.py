"""Weighted L2 projection onto non-decreasing sequences (pool adjacent violators)."""

import numpy as np
from numba import njit


@njit(cache=True)
def pava_inplace(y, w):
    """Overwrite ``y`` with its weighted isotonic (non-decreasing) fit.

    The prefix ``y[:i]`` is kept isotonic.  A new element that undercuts its
    left neighbour absorbs elements leftwards while they exceed the running
    pooled mean; elements of one earlier block share that block's mean, so
    whole blocks are absorbed.  No scratch storage is needed.
    """
    n = y.shape[0]
    for i in range(1, n):
        if y[i] >= y[i - 1]:
            continue
        total = y[i] * w[i]
        weight = w[i]
        mean = y[i]
        j = i - 1
        while j >= 0 and y[j] > mean:
            total += y[j] * w[j]
            weight += w[j]
            mean = total / weight
            j -= 1
        for m in range(j + 1, i + 1):
            y[m] = mean


def isotonic_increasing(y, weights=None) -> np.ndarray:
    y = np.array(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("expected a 1-D sequence")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape or np.any(w <= 0):
        raise ValueError("weights must be positive and match y")
    pava_inplace(y, w)
    return y
