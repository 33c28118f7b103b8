"""Bilateral cross-modality cluster matching, one-to-one and many-to-many.

Given centroids of a visible clustering (K_v) and an infrared clustering
(K_r), build the Euclidean cost matrix P, solve a one-to-one assignment from
each query direction, and (in the many-to-many variant) extend every
assignment so a cluster is also matched to everything at least as close as
its assigned anchor. The final match q is the elementwise OR of the two
directions, so no row or column of q is ever empty.

One-to-one assignments on non-square P use iterated injective rounds: each
round runs Kuhn-Munkres for the still-unmatched queries against all
galleries (padded square with a constant strictly larger than max(P); padded
matches are discarded), until every query is matched. Gallery load is thus
balanced to within one round. ``policy="argmin"`` replaces the rounds with
independent per-query argmin, kept for debugging comparisons only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .clustering import Centroids, pairwise_distances
from .errors import DimMismatch, XMMatchError
from .hungarian import min_cost_assignment


class Direction(enum.Enum):
    VISIBLE_QUERY = "visible_query"
    INFRARED_QUERY = "infrared_query"


@dataclass(frozen=True)
class MatchResult:
    """Cost matrix, per-direction matches and their OR-combination."""

    cost: np.ndarray       # (K_v, K_r) distances
    q_v: np.ndarray        # (K_v, K_r) bool, visible-query matches
    q_r: np.ndarray        # (K_v, K_r) bool, infrared-query matches
    q: np.ndarray          # q_v | q_r
    anchors_v: np.ndarray  # (K_v,) infrared anchor of each visible cluster
    anchors_r: np.ndarray  # (K_r,) visible anchor of each infrared cluster

    def __post_init__(self):
        cost = np.array(self.cost, dtype=np.float64)
        qs = {n: np.array(getattr(self, n), dtype=bool) for n in ("q_v", "q_r", "q")}
        av = np.array(self.anchors_v, dtype=np.int64)
        ar = np.array(self.anchors_r, dtype=np.int64)
        if cost.ndim != 2:
            raise XMMatchError("cost must be a 2-D matrix")
        for name, arr in qs.items():
            if arr.shape != cost.shape:
                raise XMMatchError(f"{name} must have shape {cost.shape}")
        if av.shape != (cost.shape[0],) or ar.shape != (cost.shape[1],):
            raise XMMatchError("anchor vectors disagree with cost shape")
        for name, arr in {"cost": cost, "anchors_v": av, "anchors_r": ar, **qs}.items():
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def pairs(self) -> np.ndarray:
        """True entries of q as an (n, 2) array of (visible, infrared) rows."""
        return np.argwhere(self.q)


def cost_matrix(cv: Centroids, cr: Centroids) -> np.ndarray:
    """P[i][j] = sqrt(|c_v_i|^2 + |c_r_j|^2 - 2 c_v_i . c_r_j), clamped at 0.

    Symmetric in role: cost_matrix(cr, cv) is the transpose. Read-only.
    """
    if cv.matrix.shape[1] != cr.matrix.shape[1]:
        raise DimMismatch(
            f"centroid dims differ: {cv.matrix.shape[1]} vs {cr.matrix.shape[1]}"
        )
    p = pairwise_distances(cv.matrix, cr.matrix)
    p.flags.writeable = False
    return p


def assign_one_to_one(
    p: np.ndarray, direction: Direction, policy: str = "km_rounds"
) -> np.ndarray:
    """Match every query cluster to one gallery cluster.

    Queries are rows of ``p`` for VISIBLE_QUERY, columns for INFRARED_QUERY.
    Returns one gallery index per query.
    """
    if direction is Direction.INFRARED_QUERY:
        return assign_one_to_one(np.asarray(p).T, Direction.VISIBLE_QUERY, policy)
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
        raise XMMatchError("cost matrix must be 2-D and nonempty")
    if policy == "argmin":
        return np.argmin(p, axis=1).astype(np.int64)
    if policy != "km_rounds":
        raise XMMatchError(f"unknown policy {policy!r}")

    n_q, n_g = p.shape
    pad = float(p.max()) + 1.0
    result = np.full(n_q, -1, dtype=np.int64)
    unmatched = list(range(n_q))
    while unmatched:
        side = max(len(unmatched), n_g)
        square = np.full((side, side), pad)
        square[: len(unmatched), :n_g] = p[unmatched, :]
        cols = min_cost_assignment(square)
        for local, query in enumerate(unmatched):
            if cols[local] < n_g:
                result[query] = cols[local]
        unmatched = [q for q in unmatched if result[q] == -1]
    return result


def extend_matches(p: np.ndarray, anchors: np.ndarray, direction: Direction) -> np.ndarray:
    """Mark every gallery cluster at least as close as the query's anchor.

    Ties with the anchor distance are included (<=), so the anchor itself is
    always marked. Returns a (K_v, K_r) boolean matrix for either direction.
    """
    p = np.asarray(p, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.int64)
    if direction is Direction.INFRARED_QUERY:
        return extend_matches(p.T, anchors, Direction.VISIBLE_QUERY).T
    if anchors.shape != (p.shape[0],):
        raise XMMatchError("need one anchor per query row")
    if np.any(anchors < 0) or np.any(anchors >= p.shape[1]):
        raise XMMatchError("anchor index outside gallery range")
    thresholds = p[np.arange(p.shape[0]), anchors]
    return p <= thresholds[:, None]


def _one_hot_rows(anchors: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    q = np.zeros(shape, dtype=bool)
    q[np.arange(shape[0]), anchors] = True
    return q


def bccm(cv: Centroids, cr: Centroids) -> MatchResult:
    """Bilateral one-to-one matching: OR of the two pure assignments."""
    p = cost_matrix(cv, cr)
    anchors_v = assign_one_to_one(p, Direction.VISIBLE_QUERY)
    anchors_r = assign_one_to_one(p, Direction.INFRARED_QUERY)
    q_v = _one_hot_rows(anchors_v, p.shape)
    q_r = _one_hot_rows(anchors_r, p.shape[::-1]).T
    return MatchResult(
        cost=p, q_v=q_v, q_r=q_r, q=q_v | q_r, anchors_v=anchors_v, anchors_r=anchors_r
    )


def mbccm(cv: Centroids, cr: Centroids) -> MatchResult:
    """Many-to-many bilateral matching: both assignments, anchor-extended."""
    p = cost_matrix(cv, cr)
    anchors_v = assign_one_to_one(p, Direction.VISIBLE_QUERY)
    anchors_r = assign_one_to_one(p, Direction.INFRARED_QUERY)
    q_v = extend_matches(p, anchors_v, Direction.VISIBLE_QUERY)
    q_r = extend_matches(p, anchors_r, Direction.INFRARED_QUERY)
    return MatchResult(
        cost=p, q_v=q_v, q_r=q_r, q=q_v | q_r, anchors_v=anchors_v, anchors_r=anchors_r
    )
