"""Density clustering of one embedding set and per-cluster centroids.

DBSCAN conventions used throughout:
  * Euclidean distance on the (unit-norm) vectors, neighborhood is d <= eps,
    a point counts in its own neighborhood.
  * Points are visited in index order; labels are dense 0..K-1 in order of
    first core-point discovery, so the output is deterministic for a given
    input order. Border points go to whichever cluster reaches them first.
  * A cluster left with fewer than min_pts members (possible when an earlier
    cluster claims a contested border point) is dissolved back to noise, so
    every surviving label occurs at least min_pts times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import EmbeddingSet, PseudoLabels, normalize
from .errors import EmptyCluster, NoClusters, XMMatchError


@dataclass(frozen=True)
class Centroids:
    """K normalized cluster centroids with their member counts."""

    matrix: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.float64)
        cnt = np.array(self.counts, dtype=np.int64)
        if mat.ndim != 2 or mat.shape[0] < 1:
            raise XMMatchError("centroid matrix must be (K>=1, d)")
        if cnt.shape != (mat.shape[0],) or np.any(cnt < 1):
            raise XMMatchError("counts must hold one positive int per centroid")
        mat.flags.writeable = False
        cnt.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "counts", cnt)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix, computed via the clamped inner-product form."""
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.sqrt(np.maximum(sq, 0.0))


def dbscan(es: EmbeddingSet, eps: float = 0.6, min_pts: int = 4) -> PseudoLabels:
    """Cluster one set; noise is labeled -1.

    Raises NoClusters when no core point exists (caller decides whether to
    relax eps).
    """
    if eps <= 0 or min_pts < 1:
        raise XMMatchError("eps must be > 0 and min_pts >= 1")
    x = es.vectors
    n = x.shape[0]
    adj = pairwise_distances(x, x) <= eps
    core = adj.sum(axis=1) >= min_pts
    neighbors = [np.flatnonzero(adj[i]) for i in range(n)]

    labels = np.full(n, -1, dtype=np.int64)
    k = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = k
        queue = [i]
        qi = 0
        while qi < len(queue):
            p = queue[qi]
            qi += 1
            if not core[p]:
                continue  # border points never expand
            for nb in neighbors[p]:
                if labels[nb] == -1:
                    labels[nb] = k
                    queue.append(nb)
        k += 1

    if k:
        sizes = np.bincount(labels[labels >= 0], minlength=k)
        keep = np.flatnonzero(sizes >= min_pts)
        remap = np.full(k, -1, dtype=np.int64)
        remap[keep] = np.arange(keep.size)
        labels[labels >= 0] = remap[labels[labels >= 0]]
        k = int(keep.size)
    if k == 0:
        raise NoClusters("every point is noise; relax eps or min_pts")
    return PseudoLabels(labels=labels, cluster_count=k)


def centroids(es: EmbeddingSet, labels: PseudoLabels) -> Centroids:
    """Normalized mean vector of every cluster; noise instances are excluded."""
    if labels.n != es.n:
        raise XMMatchError("labels and embeddings disagree on N")
    k = labels.cluster_count
    mat = np.zeros((k, es.dim))
    counts = np.zeros(k, dtype=np.int64)
    for c in range(k):
        members = labels.members(c)
        if members.size == 0:
            raise EmptyCluster(c)
        mat[c] = es.vectors[members].mean(axis=0)
        counts[c] = members.size
    return Centroids(matrix=normalize(mat), counts=counts)
