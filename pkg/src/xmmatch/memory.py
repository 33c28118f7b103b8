"""Momentum-updated cluster memory banks.

Four banks exist during training: modality-specific M_v (K_v slots) and M_r
(K_r slots), plus modality-agnostic banks Ma_v (K_v slots) and Ma_r (K_r
slots) that both modalities write into via matched labels. All prototypes
are kept unit norm: the update is normalize(mu*prototype + (1-mu)*feature),
applied in place, sequentially. Banks are single-writer; snapshot before
sharing across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .clustering import Centroids
from .data_model import EmbeddingSet, Modality, normalize, save_embeddings
from .errors import DimMismatch, MissingLabel, SlotOutOfRange, XMMatchError


class BankKind(enum.Enum):
    SPECIFIC_VISIBLE = "specific_visible"
    SPECIFIC_INFRARED = "specific_infrared"
    AGNOSTIC_VISIBLE = "agnostic_visible"
    AGNOSTIC_INFRARED = "agnostic_infrared"


@dataclass
class MemoryBank:
    prototypes: np.ndarray  # (K, d), unit rows, mutated in place
    kind: BankKind
    momentum: float

    def __post_init__(self):
        self.prototypes = np.array(self.prototypes, dtype=np.float64)
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] < 1:
            raise XMMatchError("prototypes must be (K>=1, d)")
        if not 0.0 <= self.momentum <= 1.0:
            raise XMMatchError("momentum must be in [0, 1]")
        norms = np.linalg.norm(self.prototypes, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise XMMatchError("prototypes must be unit norm")

    @property
    def k(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


@dataclass
class BankSet:
    specific_v: MemoryBank
    specific_r: MemoryBank
    agnostic_v: MemoryBank
    agnostic_r: MemoryBank

    def all(self) -> tuple[MemoryBank, MemoryBank, MemoryBank, MemoryBank]:
        return (self.specific_v, self.specific_r, self.agnostic_v, self.agnostic_r)


def init_banks(cv: Centroids, cr: Centroids, momentum: float) -> BankSet:
    """Fresh banks from cluster centroids; the four banks share no storage."""
    return BankSet(
        specific_v=MemoryBank(cv.matrix.copy(), BankKind.SPECIFIC_VISIBLE, momentum),
        specific_r=MemoryBank(cr.matrix.copy(), BankKind.SPECIFIC_INFRARED, momentum),
        agnostic_v=MemoryBank(cv.matrix.copy(), BankKind.AGNOSTIC_VISIBLE, momentum),
        agnostic_r=MemoryBank(cr.matrix.copy(), BankKind.AGNOSTIC_INFRARED, momentum),
    )


def momentum_update(bank: MemoryBank, slot: int, feature: np.ndarray) -> None:
    """prototypes[slot] <- normalize(mu*prototypes[slot] + (1-mu)*feature)."""
    if not 0 <= slot < bank.k:
        raise SlotOutOfRange(f"slot {slot} outside [0, {bank.k})")
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != (bank.dim,):
        raise DimMismatch(f"feature shape {f.shape} vs bank dim {bank.dim}")
    mixed = bank.momentum * bank.prototypes[slot] + (1.0 - bank.momentum) * f
    bank.prototypes[slot] = normalize(mixed)


def route_update(
    banks: BankSet,
    feature: np.ndarray,
    modality: Modality,
    label_v: int | None,
    label_r: int | None,
    intermediate_in_agnostic_r: bool = True,
) -> None:
    """Send one matched instance into every bank it belongs to.

    Specific banks: visible/intermediate instances update specific_v at
    label_v, infrared instances update specific_r at label_r. Agnostic banks:
    every instance updates agnostic_v at label_v and agnostic_r at label_r
    (its own label on its home side, the matched cross-label on the other).
    ``intermediate_in_agnostic_r=False`` keeps intermediate instances out of
    the infrared-side agnostic bank, in which case they don't need label_r.
    """
    wants_agnostic_r = modality is not Modality.INTERMEDIATE or intermediate_in_agnostic_r
    if modality.is_infrared:
        if label_r is None:
            raise MissingLabel("infrared instance without label_r")
        momentum_update(banks.specific_r, label_r, feature)
    else:
        if label_v is None:
            raise MissingLabel(f"{modality.name} instance without label_v")
        momentum_update(banks.specific_v, label_v, feature)

    if label_v is None:
        raise MissingLabel("agnostic update requires label_v")
    momentum_update(banks.agnostic_v, label_v, feature)
    if wants_agnostic_r:
        if label_r is None:
            raise MissingLabel("agnostic update requires label_r")
        momentum_update(banks.agnostic_r, label_r, feature)


def save_bank(bank: MemoryBank, path: str) -> None:
    """Checkpoint prototypes in the embedding file format."""
    family = (
        Modality.INFRARED
        if bank.kind in (BankKind.SPECIFIC_INFRARED, BankKind.AGNOSTIC_INFRARED)
        else Modality.VISIBLE
    )
    save_embeddings(EmbeddingSet(bank.prototypes.copy(), family), path)
