"""Alternating cluster-match-train loop over embeddings-as-parameters.

There is no encoder: the feature tables themselves are the parameters. Every
epoch re-clusters both modalities, optionally matches the clusterings
(per ablation), rebuilds the memory banks from fresh centroids, regenerates
the intermediate stream from the current visible table, and runs
ceil(max(N_v, N_r)/batch) SGD steps of

    f <- normalize(f - lr * d(total)/df)

followed by momentum routing of the updated batch features into the banks.
Noise-labeled instances are never sampled, so they stay frozen for the
epoch. Before ``pretrain_epochs`` (and always for the Baseline ablation)
no match exists: batches pair independently drawn clusters, only l_ms is
optimized, and only the modality-specific banks are updated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import Centroids, centroids, dbscan
from .data_model import EmbeddingSet, Modality, PseudoLabels, make_intermediate, normalize
from .errors import EmptyMatch, NoClusters, XMMatchError
from .evaluation import MatchQuality, match_quality
from .matching import MatchResult, bccm, mbccm
from .memory import BankSet, init_banks, momentum_update, route_update
from .objective import Batch, HyperParams, total_loss


class Ablation(enum.Enum):
    BASELINE = "baseline"        # modality-specific training only, no matching
    BCCM_MSMA = "bccm_msma"      # one-to-one bilateral match + agnostic banks
    MBCCM_MSMA = "mbccm_msma"    # many-to-many match + agnostic banks
    FULL = "full"                # MBCCM + agnostic banks + consistency


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    pretrain_epochs: int = 0
    ids_per_batch: int = 12
    instances_per_id: int = 12
    lr: float = 3.5e-4
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 10.0
    ablation: Ablation = Ablation.FULL
    hp: HyperParams = HyperParams()
    eps: float = 0.6
    min_pts: int = 4
    seed: int = 0
    # Noise scale for the per-epoch regenerated intermediate stream. Not part
    # of the loss hyperparameters; it shapes the data, not the objective.
    intermediate_sigma: float = 0.05

    def __post_init__(self):
        if self.epochs < 1 or self.pretrain_epochs < 0:
            raise XMMatchError("epochs must be >= 1, pretrain_epochs >= 0")
        if self.ids_per_batch < 1 or self.instances_per_id < 1:
            raise XMMatchError("batch shape values must be >= 1")
        if self.lr <= 0 or self.lr_decay_factor < 1:
            raise XMMatchError("lr must be > 0 and lr_decay_factor >= 1")
        if self.intermediate_sigma < 0:
            raise XMMatchError("intermediate_sigma must be nonnegative")


@dataclass
class StepRecord:
    epoch: int
    step: int
    l_ms: float
    l_ma: float
    l_cc: float
    total: float
    k_v: int
    k_r: int


def format_record(rec: StepRecord) -> str:
    """One metrics-log line: ``epoch step l_ms l_ma l_cc total K_v K_r``."""
    return (
        f"{rec.epoch} {rec.step} {rec.l_ms:.10g} {rec.l_ma:.10g} "
        f"{rec.l_cc:.10g} {rec.total:.10g} {rec.k_v} {rec.k_r}"
    )


@dataclass
class EpochState:
    epoch: int
    lr: float
    labels_v: PseudoLabels
    labels_r: PseudoLabels
    cents_v: Centroids
    cents_r: Centroids
    match: MatchResult | None
    banks: BankSet
    records: list[StepRecord] = field(default_factory=list)


@dataclass
class _Tables:
    """Writable parameter tables; rows stay unit norm."""

    v: np.ndarray
    vhat: np.ndarray
    r: np.ndarray


@dataclass
class RunResult:
    visible: EmbeddingSet
    infrared: EmbeddingSet
    records: list[StepRecord]
    quality: list[tuple[int, MatchQuality]]
    # Embedding snapshot taken when the matched phase begins, for comparing
    # distributions before and after cross-modality alignment.
    pretrain_visible: EmbeddingSet | None
    pretrain_infrared: EmbeddingSet | None


def _pick_members(members: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(members, size=count, replace=members.size < count)


def sample_batch(
    tables: _Tables,
    labels_v: PseudoLabels,
    labels_r: PseudoLabels,
    match: MatchResult,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> Batch:
    """Draw ids_per_batch matched cluster pairs, instances_per_id members each.

    Every triplet of one pair (a, b) shares the labels y_v=a, y_r=b; members
    are drawn without replacement unless the cluster is smaller than
    instances_per_id. Intermediate features are the visible rows' twins.
    """
    pairs = match.pairs()
    if pairs.shape[0] == 0:
        raise EmptyMatch("cannot sample from a match with no pairs")
    picked = pairs[rng.integers(0, pairs.shape[0], size=cfg.ids_per_batch)]
    return _assemble(tables, labels_v, labels_r, picked, cfg, rng)


def _sample_pretrain_batch(
    tables: _Tables,
    labels_v: PseudoLabels,
    labels_r: PseudoLabels,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> Batch:
    """Unmatched phase: visible and infrared clusters drawn independently."""
    a = rng.integers(0, labels_v.cluster_count, size=cfg.ids_per_batch)
    b = rng.integers(0, labels_r.cluster_count, size=cfg.ids_per_batch)
    return _assemble(tables, labels_v, labels_r, np.stack([a, b], axis=1), cfg, rng)


def _assemble(tables, labels_v, labels_r, picked, cfg, rng) -> Batch:
    idx_v, idx_r, y_v, y_r = [], [], [], []
    for a, b in picked:
        idx_v.append(_pick_members(labels_v.members(a), cfg.instances_per_id, rng))
        idx_r.append(_pick_members(labels_r.members(b), cfg.instances_per_id, rng))
        y_v.extend([a] * cfg.instances_per_id)
        y_r.extend([b] * cfg.instances_per_id)
    iv = np.concatenate(idx_v)
    ir = np.concatenate(idx_r)
    return Batch(
        f_v=tables.v[iv],
        f_vhat=tables.vhat[iv],
        f_r=tables.r[ir],
        y_v=np.asarray(y_v, dtype=np.int64),
        y_r=np.asarray(y_r, dtype=np.int64),
        idx_v=iv,
        idx_r=ir,
    )


def train_epoch(
    state: EpochState, tables: _Tables, cfg: TrainConfig, rng: np.random.Generator
) -> EpochState:
    """Run one epoch of SGD + bank updates in place; appends step records."""
    matched = state.match is not None
    include_cc = matched and cfg.ablation is Ablation.FULL
    batch_size = cfg.ids_per_batch * cfg.instances_per_id
    steps = math.ceil(max(tables.v.shape[0], tables.r.shape[0]) / batch_size)

    for step in range(steps):
        if matched:
            batch = sample_batch(tables, state.labels_v, state.labels_r, state.match, cfg, rng)
        else:
            batch = _sample_pretrain_batch(tables, state.labels_v, state.labels_r, cfg, rng)
        report = total_loss(batch, state.banks, cfg.hp, include_ma=matched, include_cc=include_cc)

        for i in range(batch.size):
            jv, jr = batch.idx_v[i], batch.idx_r[i]
            tables.v[jv] = normalize(tables.v[jv] - state.lr * report.grad_v[i])
            tables.vhat[jv] = normalize(tables.vhat[jv] - state.lr * report.grad_vhat[i])
            tables.r[jr] = normalize(tables.r[jr] - state.lr * report.grad_r[i])

        for i in range(batch.size):
            jv, jr = batch.idx_v[i], batch.idx_r[i]
            yv, yr = int(batch.y_v[i]), int(batch.y_r[i])
            if matched:
                route_update(state.banks, tables.v[jv], Modality.VISIBLE, yv, yr)
                route_update(state.banks, tables.vhat[jv], Modality.INTERMEDIATE, yv, yr)
                route_update(state.banks, tables.r[jr], Modality.INFRARED, yv, yr)
            else:
                momentum_update(state.banks.specific_v, yv, tables.v[jv])
                momentum_update(state.banks.specific_v, yv, tables.vhat[jv])
                momentum_update(state.banks.specific_r, yr, tables.r[jr])

        state.records.append(
            StepRecord(
                epoch=state.epoch,
                step=step,
                l_ms=report.l_ms,
                l_ma=report.l_ma,
                l_cc=report.l_cc,
                total=report.total,
                k_v=state.labels_v.cluster_count,
                k_r=state.labels_r.cluster_count,
            )
        )
    return state


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    hits = sum(1 for d in cfg.lr_decay_epochs if epoch >= d)
    return cfg.lr / cfg.lr_decay_factor**hits


def _cluster(vectors: np.ndarray, modality: Modality, cfg: TrainConfig, epoch: int):
    es = EmbeddingSet(vectors.copy(), modality)
    try:
        labels = dbscan(es, cfg.eps, cfg.min_pts)
    except NoClusters as exc:
        raise NoClusters(f"epoch {epoch}, {modality.name.lower()}: {exc}") from None
    return es, labels


def run(visible: EmbeddingSet, infrared: EmbeddingSet, cfg: TrainConfig) -> RunResult:
    """Full training loop; deterministic given cfg.seed.

    Epoch e uses only seeds derived from (cfg.seed, e), so the first
    ``pretrain_epochs`` epochs of a long run are identical to a shorter run
    with the same seed, and reruns are bit-identical.
    """
    if visible.dim != infrared.dim:
        raise XMMatchError("modality sets disagree on dimension")
    tables = _Tables(
        v=visible.vectors.copy(), vhat=np.empty_like(visible.vectors), r=infrared.vectors.copy()
    )
    records: list[StepRecord] = []
    quality: list[tuple[int, MatchQuality]] = []
    pre_v: EmbeddingSet | None = None
    pre_r: EmbeddingSet | None = None

    for epoch in range(cfg.epochs):
        if epoch == cfg.pretrain_epochs:
            pre_v = EmbeddingSet(tables.v.copy(), Modality.VISIBLE, visible.ids)
            pre_r = EmbeddingSet(tables.r.copy(), Modality.INFRARED, infrared.ids)

        es_v, labels_v = _cluster(tables.v, Modality.VISIBLE, cfg, epoch)
        es_r, labels_r = _cluster(tables.r, Modality.INFRARED, cfg, epoch)
        cents_v = centroids(es_v, labels_v)
        cents_r = centroids(es_r, labels_r)

        match = None
        if epoch >= cfg.pretrain_epochs and cfg.ablation is not Ablation.BASELINE:
            matcher = bccm if cfg.ablation is Ablation.BCCM_MSMA else mbccm
            match = matcher(cents_v, cents_r)

        noise_seed = int(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0, epoch)).generate_state(1)[0]
        )
        vhat = make_intermediate(es_v, cfg.intermediate_sigma, noise_seed)
        tables.vhat = vhat.vectors.copy()

        state = EpochState(
            epoch=epoch,
            lr=_epoch_lr(cfg, epoch),
            labels_v=labels_v,
            labels_r=labels_r,
            cents_v=cents_v,
            cents_r=cents_r,
            match=match,
            banks=init_banks(cents_v, cents_r, cfg.hp.mu),
        )
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1, epoch))
        )
        train_epoch(state, tables, cfg, rng)
        records.extend(state.records)

        if match is not None and visible.ids is not None and infrared.ids is not None:
            quality.append(
                (epoch, match_quality(match, labels_v, visible.ids, labels_r, infrared.ids))
            )

    if cfg.pretrain_epochs >= cfg.epochs:
        pre_v = EmbeddingSet(tables.v.copy(), Modality.VISIBLE, visible.ids)
        pre_r = EmbeddingSet(tables.r.copy(), Modality.INFRARED, infrared.ids)

    return RunResult(
        visible=EmbeddingSet(tables.v.copy(), Modality.VISIBLE, visible.ids),
        infrared=EmbeddingSet(tables.r.copy(), Modality.INFRARED, infrared.ids),
        records=records,
        quality=quality,
        pretrain_visible=pre_v,
        pretrain_infrared=pre_r,
    )
