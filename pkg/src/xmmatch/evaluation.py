"""Retrieval scoring (mAP / CMC / mINP), match quality, distance histograms.

Ranking is by descending cosine similarity with ties broken toward lower
gallery index. With positives of a query at ranks r_1 < ... < r_m:

  AP  = mean_j (j / r_j)          CMC rank-k = [r_1 <= k]      INP = m / r_m

Queries with zero positives in the gallery are excluded from the averages
and reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import EmbeddingSet, PseudoLabels
from .errors import EmptyMatch, MissingIds, NoPositivePairs, XMMatchError
from .matching import MatchResult

CMC_KS = (1, 10, 20)


@dataclass(frozen=True)
class RetrievalReport:
    map: float
    cmc: dict[int, float]  # rank-k accuracy for k in CMC_KS
    minp: float
    n_queries: int   # queries that were scored
    n_excluded: int  # queries with zero positives


@dataclass(frozen=True)
class MatchQuality:
    pair_precision: float
    pair_recall: float
    coverage: float


def _require_cross_modality(query: EmbeddingSet, gallery: EmbeddingSet) -> None:
    if query.modality.is_infrared == gallery.modality.is_infrared:
        raise XMMatchError("query and gallery must come from different modalities")
    if query.ids is None or gallery.ids is None:
        raise MissingIds("retrieval scoring needs ground-truth ids on both sets")
    if query.dim != gallery.dim:
        raise XMMatchError("query and gallery dims differ")


def retrieve_and_score(query: EmbeddingSet, gallery: EmbeddingSet) -> RetrievalReport:
    """Rank the gallery for every query and average AP, CMC and INP."""
    _require_cross_modality(query, gallery)
    sims = query.vectors @ gallery.vectors.T
    # argsort of -sims is ascending, so stable sort puts equal similarities
    # in gallery-index order.
    order = np.argsort(-sims, axis=1, kind="stable")

    aps, inps = [], []
    cmc_hits = {k: 0 for k in CMC_KS}
    excluded = 0
    for i in range(query.n):
        hits = gallery.ids[order[i]] == query.ids[i]
        m = int(hits.sum())
        if m == 0:
            excluded += 1
            continue
        ranks = np.flatnonzero(hits) + 1  # 1-based, increasing
        aps.append(float(np.mean(np.arange(1, m + 1) / ranks)))
        inps.append(m / float(ranks[-1]))
        for k in CMC_KS:
            cmc_hits[k] += int(ranks[0] <= k)

    scored = len(aps)
    if scored == 0:
        raise NoPositivePairs("no query has a positive in the gallery")
    return RetrievalReport(
        map=float(np.mean(aps)),
        cmc={k: cmc_hits[k] / scored for k in CMC_KS},
        minp=float(np.mean(inps)),
        n_queries=scored,
        n_excluded=excluded,
    )


def majority_identity(labels: PseudoLabels, ids: np.ndarray) -> np.ndarray:
    """Ground-truth identity owning each cluster; ties go to the lowest id."""
    if ids.shape != (labels.n,):
        raise MissingIds("need one ground-truth id per instance")
    out = np.empty(labels.cluster_count, dtype=np.int64)
    for c in range(labels.cluster_count):
        member_ids = ids[labels.members(c)]
        uniq, counts = np.unique(member_ids, return_counts=True)
        out[c] = uniq[np.argmax(counts)]  # first max = lowest identity
    return out


def match_quality(
    match: MatchResult,
    labels_v: PseudoLabels,
    ids_v: np.ndarray,
    labels_r: PseudoLabels,
    ids_r: np.ndarray,
) -> MatchQuality:
    """Score a match against ground truth via majority identities.

    A pair (a, b) is correct iff the majority identity of visible cluster a
    equals that of infrared cluster b. Recall counts identities with at least
    one correct pair over identities that own at least one cluster on each
    side. Coverage is the fraction of clusters participating in any pair.
    """
    pairs = match.pairs()
    if pairs.shape[0] == 0:
        raise EmptyMatch("match matrix has no true entries")
    own_v = majority_identity(labels_v, np.asarray(ids_v, dtype=np.int64))
    own_r = majority_identity(labels_r, np.asarray(ids_r, dtype=np.int64))

    correct = own_v[pairs[:, 0]] == own_r[pairs[:, 1]]
    precision = float(np.mean(correct))

    matchable = np.intersect1d(own_v, own_r)
    if matchable.size == 0:
        raise NoPositivePairs("no identity owns a cluster on both sides")
    hit = np.unique(own_v[pairs[correct, 0]])
    recall = float(np.isin(matchable, hit).mean())

    covered = match.q.any(axis=1).sum() + match.q.any(axis=0).sum()
    coverage = float(covered) / (match.q.shape[0] + match.q.shape[1])
    return MatchQuality(pair_precision=precision, pair_recall=recall, coverage=coverage)


def positive_distance_histogram(
    visible: EmbeddingSet,
    infrared: EmbeddingSet,
    n_pairs: int,
    bins: int,
    rng: np.random.Generator | int,
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of distances between same-identity cross-modality pairs.

    Pairs are sampled uniformly with replacement from all (visible, infrared)
    instance pairs sharing an identity; distances are binned uniformly over
    [0, 2] (the full range for unit vectors). Returns (counts, bin_edges).
    """
    if n_pairs < 1 or bins < 1:
        raise XMMatchError("n_pairs and bins must be >= 1")
    if visible.ids is None or infrared.ids is None:
        raise MissingIds("histogram sampling needs ids on both sets")
    rng = np.random.default_rng(rng)

    common = np.intersect1d(np.unique(visible.ids), np.unique(infrared.ids))
    if common.size == 0:
        raise NoPositivePairs("no identity occurs in both modalities")
    members_v = [np.flatnonzero(visible.ids == g) for g in common]
    members_r = [np.flatnonzero(infrared.ids == g) for g in common]
    weights = np.array([len(a) * len(b) for a, b in zip(members_v, members_r)], float)

    chosen = rng.choice(common.size, size=n_pairs, p=weights / weights.sum())
    pick_v = rng.integers(0, [len(members_v[c]) for c in chosen])
    pick_r = rng.integers(0, [len(members_r[c]) for c in chosen])
    vi = np.array([members_v[c][i] for c, i in zip(chosen, pick_v)])
    ri = np.array([members_r[c][i] for c, i in zip(chosen, pick_r)])

    d = np.linalg.norm(visible.vectors[vi] - infrared.vectors[ri], axis=1)
    return np.histogram(np.clip(d, 0.0, 2.0), bins=bins, range=(0.0, 2.0))
