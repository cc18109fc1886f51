"""Dynamic-programming kernels for weighted DTW, dense and banded.

Step codes: 0 = (1,1) diagonal, 1 = (1,0) row advance, 2 = (0,1) column
advance. Ties in the three-way minimum prefer diagonal, then (1,0), then
(0,1). The origin cell enters the accumulation unweighted; every later
cell is weighted by its incoming step weight.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STEP_DIAG = 0
STEP_ROW = 1
STEP_COL = 2
ORIGIN = 3
UNREACHABLE = 4


@njit(cache=True, nogil=True)
def dense_table(cost, w1, w2, w3):
    """Accumulated-cost table and argmin steps over a full cost matrix."""
    n, m = cost.shape
    acc = np.empty((n, m), dtype=np.float64)
    steps = np.empty((n, m), dtype=np.uint8)
    acc[0, 0] = cost[0, 0]
    steps[0, 0] = ORIGIN
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + w3 * cost[0, j]
        steps[0, j] = STEP_COL
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + w2 * cost[i, 0]
        steps[i, 0] = STEP_ROW
        for j in range(1, m):
            c = cost[i, j]
            best = acc[i - 1, j - 1] + w1 * c
            choice = STEP_DIAG
            cand = acc[i - 1, j] + w2 * c
            if cand < best:
                best = cand
                choice = STEP_ROW
            cand = acc[i, j - 1] + w3 * c
            if cand < best:
                best = cand
                choice = STEP_COL
            acc[i, j] = best
            steps[i, j] = choice
    return acc, steps


@njit(cache=True, nogil=True)
def banded_table(flat_cost, lo, hi, offsets, w1, w2, w3):
    """Banded variant over a packed per-row layout.

    Row ``i`` occupies ``flat_cost[offsets[i] : offsets[i] + hi[i]-lo[i]+1]``
    covering columns ``lo[i]..hi[i]``. Cells whose three predecessors all
    fall outside the band are marked UNREACHABLE with infinite cost.
    """
    n = lo.shape[0]
    acc = np.full(flat_cost.shape[0], np.inf, dtype=np.float64)
    steps = np.full(flat_cost.shape[0], UNREACHABLE, dtype=np.uint8)
    acc[0] = flat_cost[0]
    steps[0] = ORIGIN
    for j in range(lo[0] + 1, hi[0] + 1):
        k = offsets[0] + j - lo[0]
        acc[k] = acc[k - 1] + w3 * flat_cost[k]
        steps[k] = STEP_COL
    for i in range(1, n):
        base = offsets[i]
        pbase = offsets[i - 1]
        plo = lo[i - 1]
        phi = hi[i - 1]
        for j in range(lo[i], hi[i] + 1):
            k = base + j - lo[i]
            c = flat_cost[k]
            best = np.inf
            choice = UNREACHABLE
            if plo <= j - 1 and j - 1 <= phi:
                best = acc[pbase + j - 1 - plo] + w1 * c
                choice = STEP_DIAG
            if plo <= j and j <= phi:
                cand = acc[pbase + j - plo] + w2 * c
                if cand < best:
                    best = cand
                    choice = STEP_ROW
            if j - 1 >= lo[i]:
                cand = acc[k - 1] + w3 * c
                if cand < best:
                    best = cand
                    choice = STEP_COL
            acc[k] = best
            steps[k] = choice
    return acc, steps


def backtrack_dense(steps: np.ndarray) -> np.ndarray:
    """Walk the step table from the last cell to the origin.

    Returns the 0-based path as an (L, 2) int array in forward order.
    """
    i = steps.shape[0] - 1
    j = steps.shape[1] - 1
    out = [(i, j)]
    while not (i == 0 and j == 0):
        s = steps[i, j]
        if s == STEP_DIAG:
            i -= 1
            j -= 1
        elif s == STEP_ROW:
            i -= 1
        elif s == STEP_COL:
            j -= 1
        else:
            raise RuntimeError("backtracking hit an unreachable cell")
        out.append((i, j))
    out.reverse()
    return np.asarray(out, dtype=np.int64)


def backtrack_banded(steps: np.ndarray, lo: np.ndarray, hi: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Backtrack through a packed banded step table; 0-based forward path."""
    i = lo.shape[0] - 1
    j = int(hi[i])
    out = [(i, j)]
    while not (i == 0 and j == 0):
        s = steps[offsets[i] + j - lo[i]]
        if s == STEP_DIAG:
            i -= 1
            j -= 1
        elif s == STEP_ROW:
            i -= 1
        elif s == STEP_COL:
            j -= 1
        else:
            raise RuntimeError("backtracking hit an unreachable cell in the band")
        out.append((i, j))
    out.reverse()
    return np.asarray(out, dtype=np.int64)
