"""Exact minimum-cost assignment for square matrices (Kuhn-Munkres).

Potentials-and-augmenting-paths formulation, O(n^3). All scans run in
ascending column order with strict improvement tests, so among equal-cost
optima the solver prefers lower column indices and its output is a pure
function of the input matrix.
"""

from __future__ import annotations

import numpy as np

from .errors import XMMatchError


def min_cost_assignment(cost: np.ndarray) -> np.ndarray:
    """Return col[i] = column assigned to row i, minimizing total cost.

    ``cost`` must be square with finite entries.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
        raise XMMatchError(f"cost matrix must be square, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise XMMatchError("cost matrix entries must be finite")
    n = c.shape[0]

    # Index 0 is a sentinel column; real rows/columns live at 1..n.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (0 = free)
    way = np.zeros(n + 1, dtype=np.int64)

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = c[i0 - 1, :] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            reach = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(reach)) + 1  # first minimum: lowest column wins ties
            delta = reach[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        # Augment: flip the alternating path back to the sentinel.
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    col = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        col[p[j] - 1] = j - 1
    return col
