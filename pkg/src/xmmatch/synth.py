"""Synthetic cross-modality embedding generator.

Produces two embedding sets that share identities but differ by a
per-identity modality offset, plus optional split identities whose visible
samples form two sub-clusters. Both effects drive the matching problem:
a global offset would be trivially removable, so the shift direction is
drawn independently per identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import EmbeddingSet, Modality, normalize
from .errors import XMMatchError


@dataclass(frozen=True)
class SynthConfig:
    n_ids: int
    per_id_per_modality: int
    dim: int
    intra_sigma: float
    modality_shift: float
    split_prob: float
    seed: int
    # Distance between the two visible sub-anchors of a split identity.
    split_offset: float = 0.8

    def __post_init__(self):
        if self.n_ids < 1 or self.per_id_per_modality < 1 or self.dim < 1:
            raise XMMatchError("n_ids, per_id_per_modality and dim must be >= 1")
        if self.intra_sigma < 0 or self.modality_shift < 0 or self.split_offset < 0:
            raise XMMatchError("sigmas, shift and offset must be nonnegative")
        if not 0.0 <= self.split_prob <= 1.0:
            raise XMMatchError("split_prob must be in [0, 1]")


def anchor_geometry(cfg: SynthConfig):
    """Identity-level geometry, deterministic given cfg.seed.

    Returns (anchors, shifts, split_mask, offsets): anchors are unit vectors,
    shifts have norm cfg.modality_shift, offsets norm cfg.split_offset.
    The infrared anchor of identity k is anchors[k] + shifts[k]; split
    identities get a second visible sub-anchor at anchors[k] + offsets[k].
    """
    rng = np.random.default_rng(cfg.seed)
    anchors = normalize(rng.normal(size=(cfg.n_ids, cfg.dim)))
    shifts = normalize(rng.normal(size=(cfg.n_ids, cfg.dim))) * cfg.modality_shift
    split_mask = rng.random(cfg.n_ids) < cfg.split_prob
    offsets = normalize(rng.normal(size=(cfg.n_ids, cfg.dim))) * cfg.split_offset
    return anchors, shifts, split_mask, offsets


def generate(cfg: SynthConfig) -> tuple[EmbeddingSet, EmbeddingSet]:
    """Draw the two modality sets; rows are identity-major, ids populated.

    Every sample is normalize(anchor_variant + Gaussian noise(0, intra_sigma^2 I)).
    Visible anchor variants: anchors[k], and anchors[k] + offsets[k] for the
    second half of a split identity's samples. Infrared: anchors[k] + shifts[k].
    """
    anchors, shifts, split_mask, offsets = anchor_geometry(cfg)
    # Child generator so sample noise is decoupled from the geometry draws.
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    per = cfg.per_id_per_modality

    vis_rows, ir_rows, ids = [], [], []
    for k in range(cfg.n_ids):
        base_v = np.tile(anchors[k], (per, 1))
        if split_mask[k]:
            base_v[per - per // 2 :] += offsets[k]
        vis_rows.append(base_v + rng.normal(0.0, cfg.intra_sigma, size=(per, cfg.dim)))
        base_r = anchors[k] + shifts[k]
        ir_rows.append(base_r + rng.normal(0.0, cfg.intra_sigma, size=(per, cfg.dim)))
        ids.extend([k] * per)

    id_arr = np.asarray(ids, dtype=np.int64)
    visible = EmbeddingSet(normalize(np.concatenate(vis_rows)), Modality.VISIBLE, id_arr)
    infrared = EmbeddingSet(normalize(np.concatenate(ir_rows)), Modality.INFRARED, id_arr.copy())
    return visible, infrared
