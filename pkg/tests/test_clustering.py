"""Density clustering tests.

reference_dbscan below is an independent oracle: the classic scan-and-expand
formulation with a per-point range query, written without looking at the
library's adjacency-matrix implementation. Both follow the same contract
(index-order scan, borders to the first claimer, clusters below min_pts
dissolved, dense labels in first-core order), so label arrays must agree
exactly, not just as partitions.
"""

import math

import numpy as np
import pytest

from xmmatch import (
    Centroids,
    EmbeddingSet,
    EmptyCluster,
    Modality,
    NoClusters,
    PseudoLabels,
    centroids,
    dbscan,
    normalize,
    pairwise_distances,
)
from xmmatch.errors import XMMatchError


def reference_dbscan(x, eps, min_pts):
    """Textbook DBSCAN; returns (labels, k) with the dissolve rule applied."""
    n = x.shape[0]

    def region(i):
        return [j for j in range(n) if math.dist(x[i], x[j]) <= eps]

    UNSEEN = None
    labels = [UNSEEN] * n
    c = 0
    for i in range(n):
        if labels[i] is not UNSEEN:
            continue
        seeds = region(i)
        if len(seeds) < min_pts:
            labels[i] = -1
            continue
        labels[i] = c
        queue = [j for j in seeds if j != i]
        pos = 0
        while pos < len(queue):
            q = queue[pos]
            pos += 1
            if labels[q] == -1:
                labels[q] = c
            if labels[q] is not UNSEEN:
                continue
            labels[q] = c
            more = region(q)
            if len(more) >= min_pts:
                queue.extend(more)
        c += 1

    # dissolve undersized clusters, renumber survivors in discovery order
    sizes = [0] * c
    for lab in labels:
        if lab >= 0:
            sizes[lab] += 1
    rename = {}
    for old in range(c):
        if sizes[old] >= min_pts:
            rename[old] = len(rename)
    out = [rename.get(lab, -1) if lab >= 0 else -1 for lab in labels]
    return np.asarray(out, dtype=np.int64), len(rename)


def ring(angles):
    """Unit vectors on the circle; chord(t1,t2) = 2 sin(|t1-t2|/2)."""
    a = np.asarray(angles, dtype=np.float64)
    return np.stack([np.cos(a), np.sin(a)], axis=1)


def as_set(vecs, modality=Modality.VISIBLE, ids=None):
    return EmbeddingSet(vectors=normalize(vecs), modality=modality, ids=ids)


def random_sphere_mix(rng, d):
    """Blobby unit vectors plus stray points, for oracle comparisons."""
    m = int(rng.integers(1, 5))
    anchors = normalize(rng.normal(size=(m, d)))
    rows = []
    for k in range(m):
        cnt = int(rng.integers(2, 14))
        rows.append(anchors[k] + rng.normal(0, 0.1, size=(cnt, d)))
    stray = int(rng.integers(0, 8))
    if stray:
        rows.append(rng.normal(size=(stray, d)))
    x = normalize(np.concatenate(rows))
    return x[rng.permutation(x.shape[0])]


class TestAgainstReference:
    def test_random_instances_match_exactly(self):
        rng = np.random.default_rng(2024)
        compared = skipped = 0
        for _ in range(120):
            d = int(rng.integers(2, 7))
            x = random_sphere_mix(rng, d)
            eps = float(rng.uniform(0.15, 0.9))
            min_pts = int(rng.integers(1, 7))
            want_labels, want_k = reference_dbscan(x, eps, min_pts)
            es = as_set(x)
            if want_k == 0:
                with pytest.raises(NoClusters):
                    dbscan(es, eps=eps, min_pts=min_pts)
                skipped += 1
                continue
            got = dbscan(es, eps=eps, min_pts=min_pts)
            assert got.cluster_count == want_k
            assert np.array_equal(got.labels, want_labels)
            compared += 1
        assert compared >= 60  # the generator must actually exercise clusters


class TestFrozenExamples:
    def test_two_tight_groups(self):
        x = np.concatenate([np.tile([1.0, 0.0], (5, 1)), np.tile([0.0, 1.0], (5, 1))])
        labels = dbscan(as_set(x), eps=0.1, min_pts=3)
        assert labels.cluster_count == 2
        assert labels.labels.tolist() == [0] * 5 + [1] * 5

    def test_all_noise_raises(self):
        x = np.eye(4)
        with pytest.raises(NoClusters):
            dbscan(as_set(x), eps=0.5, min_pts=3)

    def test_chain_merges_through_shared_core(self):
        # 0-0.3-0.6 rad: adjacent chords 0.2989 <= eps < 0.5910
        labels = dbscan(as_set(ring([0.0, 0.3, 0.6])), eps=0.4, min_pts=2)
        assert labels.cluster_count == 1
        assert labels.labels.tolist() == [0, 0, 0]

    def test_border_goes_to_first_cluster(self):
        # two 4-point cores with one contested border in between; the border is
        # within eps of exactly one member of each group
        a = [0.00, 0.05, 0.10, 0.15]
        b = [0.64, 0.70, 0.72, 0.74]
        x = 0.395
        eps, min_pts = 0.25, 4

        pts = ring(a + b + [x])
        d = pairwise_distances(pts, pts)
        deg = (d <= eps).sum(axis=1)
        assert deg.tolist() == [4, 4, 4, 5, 5, 4, 4, 4, 3]  # precondition

        labels = dbscan(as_set(pts), eps=eps, min_pts=min_pts)
        assert labels.labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1, 0]

        # swap the groups' positions: x now sits with the b-group, because the
        # border always goes to whichever cluster is discovered first
        pts2 = ring(b + a + [x])
        labels2 = dbscan(as_set(pts2), eps=eps, min_pts=min_pts)
        assert labels2.labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1, 0]
        assert labels2.labels[8] == labels2.labels[0] != labels2.labels[4]

    def test_undersized_cluster_dissolves(self):
        # q is a core only thanks to the contested border x; once the first
        # cluster claims x, q's cluster has 3 < min_pts members and dissolves
        a = [0.00, 0.05, 0.10, 0.15]
        x, q, t1, t2 = 0.38, 0.62, 0.70, 0.75
        eps, min_pts = 0.25, 4

        pts = ring(a + [x, q, t1, t2])
        d = pairwise_distances(pts, pts)
        deg = (d <= eps).sum(axis=1)
        assert deg.tolist() == [4, 4, 4, 5, 3, 4, 3, 3]  # precondition

        labels = dbscan(as_set(pts), eps=eps, min_pts=min_pts)
        assert labels.cluster_count == 1
        assert labels.labels.tolist() == [0, 0, 0, 0, 0, -1, -1, -1]

    def test_min_pts_one_has_no_noise(self):
        rng = np.random.default_rng(3)
        x = normalize(rng.normal(size=(30, 4)))
        labels = dbscan(as_set(x), eps=0.05, min_pts=1)
        assert (labels.labels >= 0).all()

    def test_every_cluster_has_min_pts_members(self):
        rng = np.random.default_rng(4)
        for seed in range(20):
            x = random_sphere_mix(np.random.default_rng(seed), 3)
            try:
                labels = dbscan(as_set(x), eps=0.3, min_pts=4)
            except NoClusters:
                continue
            counts = np.bincount(labels.labels[labels.labels >= 0])
            assert counts.size == labels.cluster_count
            assert (counts >= 4).all()

    def test_parameter_validation(self):
        es = as_set(np.eye(3))
        with pytest.raises(XMMatchError):
            dbscan(es, eps=0.0, min_pts=3)
        with pytest.raises(XMMatchError):
            dbscan(es, eps=0.5, min_pts=0)


class TestPermutation:
    def test_blobs_permute_to_same_partition(self):
        # well separated blobs: no contested borders, so permuting the input
        # permutes the labeling up to cluster renaming
        rng = np.random.default_rng(5)
        anchors = np.eye(3, 8)
        x = normalize(
            np.concatenate([anchors[k] + rng.normal(0, 0.03, size=(8, 8)) for k in range(3)])
        )
        base = dbscan(as_set(x), eps=0.3, min_pts=4)
        for trial in range(10):
            perm = rng.permutation(x.shape[0])
            permed = dbscan(as_set(x[perm]), eps=0.3, min_pts=4)
            assert permed.cluster_count == base.cluster_count
            # same points together: compare via pairwise co-membership
            lp = permed.labels
            lb = base.labels[perm]
            same_p = lp[:, None] == lp[None, :]
            same_b = lb[:, None] == lb[None, :]
            assert np.array_equal(same_p, same_b)
            assert np.array_equal(lp == -1, lb == -1)


class TestCentroids:
    def test_known_means(self):
        x = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        labels = PseudoLabels(labels=np.array([0, 0, 1, 1]), cluster_count=2)
        cents = centroids(as_set(x), labels)
        assert cents.k == 2
        assert np.allclose(cents.matrix, [[1.0, 0.0], [0.0, 1.0]], atol=1e-15)
        assert cents.counts.tolist() == [2, 2]

    def test_mean_is_normalized(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        labels = PseudoLabels(labels=np.array([0, 0]), cluster_count=1)
        cents = centroids(as_set(x), labels)
        r = math.sqrt(0.5)
        assert np.allclose(cents.matrix, [[r, r]], atol=1e-15)

    def test_noise_excluded(self):
        x = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        labels = PseudoLabels(labels=np.array([0, 0, -1]), cluster_count=1)
        cents = centroids(as_set(x), labels)
        assert np.allclose(cents.matrix, [[1.0, 0.0]], atol=1e-15)
        assert cents.counts.tolist() == [2]

    def test_empty_cluster_raises(self):
        x = np.array([[1.0, 0.0], [1.0, 0.0]])
        labels = PseudoLabels(labels=np.array([0, 0]), cluster_count=2)
        with pytest.raises(EmptyCluster) as exc:
            centroids(as_set(x), labels)
        assert exc.value.cluster == 1

    def test_length_mismatch(self):
        x = np.array([[1.0, 0.0]])
        labels = PseudoLabels(labels=np.array([0, 0]), cluster_count=1)
        with pytest.raises(XMMatchError):
            centroids(as_set(x), labels)

    def test_rows_unit_norm(self):
        rng = np.random.default_rng(6)
        x = normalize(rng.normal(size=(40, 5)))
        labels = PseudoLabels(labels=rng.integers(0, 4, size=40), cluster_count=4)
        cents = centroids(as_set(x), labels)
        assert np.allclose(np.linalg.norm(cents.matrix, axis=1), 1.0, atol=1e-12)

    def test_centroids_container_validation(self):
        with pytest.raises(XMMatchError):
            Centroids(matrix=np.ones((2, 3)), counts=np.array([1]))
        with pytest.raises(XMMatchError):
            Centroids(matrix=np.ones((2, 3)), counts=np.array([1, 0]))


class TestDistances:
    def test_frozen_values(self):
        a = np.array([[1.0, 0.0]])
        b = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        d = pairwise_distances(a, b)
        assert np.allclose(d, [[0.0, math.sqrt(2.0), 2.0]], atol=1e-12)

    def test_clamp_keeps_self_distance_near_zero(self):
        # the clamped inner-product form leaves sqrt(float residue) ~1e-8 on
        # the diagonal; the clamp guarantees it never goes NaN
        rng = np.random.default_rng(7)
        x = normalize(rng.normal(size=(10, 6)))
        d = pairwise_distances(x, x)
        assert (np.diag(d) <= 1e-7).all()
        assert (d >= 0.0).all()
        assert np.isfinite(d).all()
