"""Contrastive and consistency objectives over memory banks.

All similarities are cosine; logits are sim/tau. Prototypes are treated as
constants (stop-gradient): every gradient here is with respect to features
only. Gradients are plain Euclidean gradients of the loss as written,
including the feature-normalization term inside the cosine; projection back
to the unit sphere is the trainer's job.

Term structure for a batch of (f_v, f_vhat, f_r) triplets sharing labels
(y_v, y_r):

  l_ms: mean_i [ L(f_v -> M_v; y_v) + L(f_vhat -> M_v; y_v) + L(f_r -> M_r; y_r) ]
  l_ma: mean_i of the six terms {f_v, f_vhat, f_r} x {Ma_v at y_v, Ma_r at y_r}
  l_cc: mean_i of the six terms {f_v, f_vhat, f_r} x {(M_v, Ma_v), (M_r, Ma_r)}
  total = l_ms + alpha*l_ma + beta*l_cc

where L is -log softmax at the positive slot and the consistency term is the
symmetrized KL between the two banks' prediction distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyBatch,
    MissingLabel,
    ScaleMismatch,
    SlotOutOfRange,
    XMMatchError,
    ZeroVector,
)
from .memory import BankSet, MemoryBank


@dataclass(frozen=True)
class HyperParams:
    tau: float = 0.05
    mu: float = 0.1
    alpha: float = 0.9
    beta: float = 0.5

    def __post_init__(self):
        if self.tau <= 0:
            raise XMMatchError("tau must be positive")
        if not 0.0 <= self.mu <= 1.0:
            raise XMMatchError("mu must be in [0, 1]")
        if self.alpha < 0 or self.beta < 0:
            raise XMMatchError("alpha and beta must be nonnegative")


@dataclass(frozen=True)
class Batch:
    """B aligned triplets. idx_* are optional table row indices for trainers."""

    f_v: np.ndarray
    f_vhat: np.ndarray
    f_r: np.ndarray
    y_v: np.ndarray | None
    y_r: np.ndarray | None
    idx_v: np.ndarray | None = None
    idx_r: np.ndarray | None = None

    def __post_init__(self):
        shape = self.f_v.shape
        if len(shape) != 2 or self.f_vhat.shape != shape or self.f_r.shape != shape:
            raise XMMatchError("f_v, f_vhat, f_r must share shape (B, d)")
        for name in ("y_v", "y_r", "idx_v", "idx_r"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (shape[0],):
                raise XMMatchError(f"{name} must have one entry per triplet")

    @property
    def size(self) -> int:
        return self.f_v.shape[0]


@dataclass
class LossReport:
    l_ms: float
    l_ma: float
    l_cc: float
    total: float
    grad_v: np.ndarray
    grad_vhat: np.ndarray
    grad_r: np.ndarray


class _View:
    """Cosine logits of one feature against one bank, plus chain-rule pieces."""

    __slots__ = ("z", "logp", "p", "fhat", "fn", "chat", "tau")

    def __init__(self, f: np.ndarray, bank: MemoryBank, tau: float):
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (bank.dim,):
            raise XMMatchError(f"feature shape {f.shape} vs bank dim {bank.dim}")
        self.fn = float(np.linalg.norm(f))
        if self.fn < 1e-12:
            raise ZeroVector(0)
        self.fhat = f / self.fn
        self.chat = bank.prototypes / np.linalg.norm(bank.prototypes, axis=1)[:, None]
        self.tau = tau
        self.z = (self.chat @ self.fhat) / tau
        m = self.z.max()
        self.logp = self.z - m - np.log(np.exp(self.z - m).sum())
        self.p = np.exp(self.logp)

    def chain(self, dz: np.ndarray) -> np.ndarray:
        """Map d(loss)/d(logits) to d(loss)/d(feature)."""
        w = self.chat.T @ dz
        return (w - self.fhat * (self.fhat @ w)) / (self.tau * self.fn)


def _check_slot(positive: int, k: int) -> int:
    positive = int(positive)
    if not 0 <= positive < k:
        raise SlotOutOfRange(f"positive slot {positive} outside [0, {k})")
    return positive


def _contrastive(view: _View, positive: int) -> tuple[float, np.ndarray]:
    """Loss and d(loss)/d(logits) for -log softmax at the positive slot."""
    loss = -view.logp[positive]
    dz = view.p.copy()
    dz[positive] -= 1.0
    return float(loss), dz


def _consistency(vs: _View, va: _View) -> tuple[float, np.ndarray, np.ndarray]:
    """Symmetrized KL between two views; returns loss and both dz vectors."""
    diff = vs.logp - va.logp
    kl_pq = float(vs.p @ diff)
    kl_qp = float(-(va.p @ diff))
    loss = 0.5 * (kl_pq + kl_qp)
    dz_s = 0.5 * (vs.p * (diff - kl_pq) + (vs.p - va.p))
    dz_a = 0.5 * (va.p * (-diff - kl_qp) + (va.p - vs.p))
    return loss, dz_s, dz_a


def predict(feature: np.ndarray, bank: MemoryBank, tau: float) -> np.ndarray:
    """Softmax distribution of one feature over a bank's prototypes."""
    if tau <= 0:
        raise XMMatchError("tau must be positive")
    return _View(feature, bank, tau).p


def contrastive_loss(
    feature: np.ndarray,
    bank: MemoryBank,
    positive: int,
    tau: float,
    with_grad: bool = False,
):
    """-log softmax(sim(feature, prototypes)/tau) at the positive slot.

    Bounded by [0, 2/tau + log K]. With ``with_grad`` returns (loss, grad).
    """
    if tau <= 0:
        raise XMMatchError("tau must be positive")
    positive = _check_slot(positive, bank.k)
    view = _View(feature, bank, tau)
    loss, dz = _contrastive(view, positive)
    if with_grad:
        return loss, view.chain(dz)
    return loss


def consistency_loss(
    feature: np.ndarray,
    bank_s: MemoryBank,
    bank_a: MemoryBank,
    tau: float,
    with_grad: bool = False,
):
    """0.5*[KL(p||q) + KL(q||p)] of the feature's predictions over two banks.

    Only same-scale banks compare; differing K raises ScaleMismatch. Zero iff
    the two prediction distributions coincide.
    """
    if tau <= 0:
        raise XMMatchError("tau must be positive")
    if bank_s.k != bank_a.k:
        raise ScaleMismatch(f"bank sizes differ: {bank_s.k} vs {bank_a.k}")
    vs = _View(feature, bank_s, tau)
    va = _View(feature, bank_a, tau)
    loss, dz_s, dz_a = _consistency(vs, va)
    if with_grad:
        return loss, vs.chain(dz_s) + va.chain(dz_a)
    return loss


def _require_labels(batch: Batch, *names: str) -> None:
    if batch.size == 0:
        raise EmptyBatch("batch has no instances")
    for name in names:
        if getattr(batch, name) is None:
            raise MissingLabel(f"batch lacks {name}")


def _stream_specs(batch: Batch, banks: BankSet, i: int):
    """Per-instance streams: (feature, own specific bank, own specific label)."""
    yv = int(batch.y_v[i])
    yr = int(batch.y_r[i])
    return (
        ("v", batch.f_v[i], banks.specific_v, yv, yv, yr),
        ("vhat", batch.f_vhat[i], banks.specific_v, yv, yv, yr),
        ("r", batch.f_r[i], banks.specific_r, yr, yv, yr),
    )


def l_ms(batch: Batch, banks: BankSet, tau: float) -> float:
    """Modality-specific contrastive loss, mean of 3 terms per triplet."""
    _require_labels(batch, "y_v", "y_r")
    total = 0.0
    for i in range(batch.size):
        for _, f, bank, pos, _, _ in _stream_specs(batch, banks, i):
            total += contrastive_loss(f, bank, pos, tau)
    return total / batch.size


def l_ma(batch: Batch, banks: BankSet, tau: float) -> float:
    """Modality-agnostic contrastive loss, mean of 6 terms per triplet."""
    _require_labels(batch, "y_v", "y_r")
    total = 0.0
    for i in range(batch.size):
        for _, f, _, _, yv, yr in _stream_specs(batch, banks, i):
            total += contrastive_loss(f, banks.agnostic_v, yv, tau)
            total += contrastive_loss(f, banks.agnostic_r, yr, tau)
    return total / batch.size


def l_cc(batch: Batch, banks: BankSet, tau: float) -> float:
    """Cross-consistency loss, mean of 6 symmetrized-KL terms per triplet."""
    _require_labels(batch, "y_v", "y_r")
    total = 0.0
    for i in range(batch.size):
        for _, f, _, _, _, _ in _stream_specs(batch, banks, i):
            total += consistency_loss(f, banks.specific_v, banks.agnostic_v, tau)
            total += consistency_loss(f, banks.specific_r, banks.agnostic_r, tau)
    return total / batch.size


def total_loss(
    batch: Batch,
    banks: BankSet,
    hp: HyperParams,
    include_ma: bool = True,
    include_cc: bool = True,
) -> LossReport:
    """All loss terms plus the gradient of the total for every batch feature.

    ``include_ma``/``include_cc`` zero out and skip a component entirely
    (used by ablations and by pretraining, where no match exists); the
    weighted identity total = l_ms + alpha*l_ma + beta*l_cc always holds.
    """
    _require_labels(batch, "y_v", "y_r")
    b = batch.size
    grads = {
        "v": np.zeros_like(batch.f_v),
        "vhat": np.zeros_like(batch.f_vhat),
        "r": np.zeros_like(batch.f_r),
    }
    sum_ms = sum_ma = sum_cc = 0.0

    if include_cc and (
        banks.specific_v.k != banks.agnostic_v.k
        or banks.specific_r.k != banks.agnostic_r.k
    ):
        raise ScaleMismatch("specific/agnostic bank pairs must share K")

    bank_by_key = {
        "spec_v": banks.specific_v,
        "spec_r": banks.specific_r,
        "ag_v": banks.agnostic_v,
        "ag_r": banks.agnostic_r,
    }
    for i in range(b):
        for name, f, _, own_pos, yv, yr in _stream_specs(batch, banks, i):
            views: dict[str, _View] = {}

            def view(key: str) -> _View:
                if key not in views:
                    views[key] = _View(f, bank_by_key[key], hp.tau)
                return views[key]

            own_view = view("spec_r" if name == "r" else "spec_v")
            g = np.zeros_like(f)

            loss, dz = _contrastive(own_view, _check_slot(own_pos, own_view.p.size))
            sum_ms += loss
            g += own_view.chain(dz)

            if include_ma:
                for key, pos in (("ag_v", yv), ("ag_r", yr)):
                    v = view(key)
                    loss, dz = _contrastive(v, _check_slot(pos, v.p.size))
                    sum_ma += loss
                    g += hp.alpha * v.chain(dz)

            if include_cc:
                for key_s, key_a in (("spec_v", "ag_v"), ("spec_r", "ag_r")):
                    vs, va = view(key_s), view(key_a)
                    loss, dz_s, dz_a = _consistency(vs, va)
                    sum_cc += loss
                    g += hp.beta * (vs.chain(dz_s) + va.chain(dz_a))

            grads[name][i] = g / b

    ms = sum_ms / b
    ma = sum_ma / b if include_ma else 0.0
    cc = sum_cc / b if include_cc else 0.0
    return LossReport(
        l_ms=ms,
        l_ma=ma,
        l_cc=cc,
        total=ms + hp.alpha * ma + hp.beta * cc,
        grad_v=grads["v"],
        grad_vhat=grads["vhat"],
        grad_r=grads["r"],
    )
