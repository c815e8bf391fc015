"""Contrastive and triplet losses with embedding gradients, plus batch samplers.

Both losses report the mean over items.  Item indices refer to rows of the
embedding matrix handed to the loss (for training, positions inside the
current batch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, InfeasibleBatch
from .datagen import OUTLIER


@dataclass(frozen=True)
class PairBatch:
    anchor_idx: np.ndarray
    other_idx: np.ndarray
    is_positive: np.ndarray
    margin: float = 1.0

    def __len__(self):
        return len(self.anchor_idx)


@dataclass(frozen=True)
class TripletBatch:
    anchor_idx: np.ndarray
    positive_idx: np.ndarray
    negative_idx: np.ndarray
    margin: float = 1.0

    def __len__(self):
        return len(self.anchor_idx)


@dataclass(frozen=True)
class LossOutput:
    total: float
    per_item: np.ndarray
    active_mask: np.ndarray
    grad_embeddings: np.ndarray


def _check_idx(n, *arrays):
    for a in arrays:
        if len(a) and (a.min() < 0 or a.max() >= n):
            raise IndexOutOfRange(f"index outside [0, {n})")


def contrastive_loss(embeddings: np.ndarray, batch: PairBatch) -> LossOutput:
    """``|f(x)-f(y)|^2`` for positives, ``[m - |f(x)-f(y)|]_+^2`` for negatives.

    At zero distance the negative-pair gradient direction is undefined; it is
    taken as zero there.
    """
    a = np.asarray(batch.anchor_idx, dtype=np.int64)
    o = np.asarray(batch.other_idx, dtype=np.int64)
    pos = np.asarray(batch.is_positive, dtype=bool)
    _check_idx(len(embeddings), a, o)
    n = len(a)
    diff = embeddings[a] - embeddings[o]
    sq = np.sum(diff * diff, axis=1)
    dist = np.sqrt(sq)
    gap = np.maximum(batch.margin - dist, 0.0)
    per_item = np.where(pos, sq, gap * gap)

    grad = np.zeros_like(embeddings)
    if n:
        safe = np.where(dist > 0, dist, 1.0)
        coef = np.where(pos, 2.0, np.where(dist > 0, -2.0 * gap / safe, 0.0)) / n
        g = coef[:, None] * diff
        np.add.at(grad, a, g)
        np.add.at(grad, o, -g)
    total = float(per_item.mean()) if n else 0.0
    return LossOutput(total, per_item, per_item > 0, grad)


def triplet_loss(embeddings: np.ndarray, batch: TripletBatch) -> LossOutput:
    """``[|f(a)-f(p)|^2 - |f(a)-f(n)|^2 + m]_+`` per triplet."""
    a = np.asarray(batch.anchor_idx, dtype=np.int64)
    p = np.asarray(batch.positive_idx, dtype=np.int64)
    q = np.asarray(batch.negative_idx, dtype=np.int64)
    _check_idx(len(embeddings), a, p, q)
    n = len(a)
    ea, ep, en = embeddings[a], embeddings[p], embeddings[q]
    dap = np.sum((ea - ep) ** 2, axis=1)
    dan = np.sum((ea - en) ** 2, axis=1)
    per_item = np.maximum(dap - dan + batch.margin, 0.0)
    active = per_item > 0

    grad = np.zeros_like(embeddings)
    if n:
        w = (2.0 * active / n)[:, None]
        np.add.at(grad, a, w * (en - ep))
        np.add.at(grad, p, w * (ep - ea))
        np.add.at(grad, q, w * (ea - en))
    total = float(per_item.mean()) if n else 0.0
    return LossOutput(total, per_item, active, grad)


def _groups(labels):
    """Positions of non-outlier samples whose class occurs at least twice."""
    by_class = {}
    for i, lab in enumerate(labels):
        if lab != OUTLIER:
            by_class.setdefault(int(lab), []).append(i)
    return {c: idx for c, idx in by_class.items() if len(idx) >= 2}


def _check_feasible(labels, groups):
    if not groups:
        raise InfeasibleBatch("no class has two members in the batch; no positive exists")
    if len(np.unique(labels)) < 2:
        raise InfeasibleBatch("batch holds a single label; no negative exists")


def _pick_negative(labels, anchor, rng):
    others = np.flatnonzero(labels != labels[anchor])
    return int(others[rng.integers(len(others))])


def sample_pairs(labels, batch_indices, rng, margin: float = 1.0) -> PairBatch:
    """``len(batch_indices)`` pairs, half positive (rounded down) and half negative.

    Positive pairs join two distinct same-class members; outliers can only be
    the second member of a negative pair.  Returned indices are positions in
    ``batch_indices``.
    """
    lab = np.asarray(labels)[np.asarray(batch_indices)]
    n = len(lab)
    groups = _groups(lab)
    _check_feasible(lab, groups)
    eligible = [i for idx in groups.values() for i in idx]
    eligible.sort()
    anchors_neg = np.flatnonzero(lab != OUTLIER)

    n_pos = n // 2
    a = np.empty(n, dtype=np.int64)
    o = np.empty(n, dtype=np.int64)
    for k in range(n_pos):
        a[k], o[k] = _positive(lab, groups, eligible, rng)
    for k in range(n_pos, n):
        i = int(anchors_neg[rng.integers(len(anchors_neg))])
        a[k], o[k] = i, _pick_negative(lab, i, rng)
    is_pos = np.arange(n) < n_pos
    return PairBatch(a, o, is_pos, margin)


def _positive(lab, groups, eligible, rng):
    i = eligible[rng.integers(len(eligible))]
    mates = [j for j in groups[int(lab[i])] if j != i]
    return i, mates[rng.integers(len(mates))]


def sample_triplets(labels, batch_indices, rng, margin: float = 1.0) -> TripletBatch:
    """``len(batch_indices)`` uniformly drawn valid triplets (no mining).

    The anchor is uniform over non-outlier samples with a same-class mate,
    the positive uniform over its mates, the negative uniform over samples
    of any other label (outliers included).
    """
    lab = np.asarray(labels)[np.asarray(batch_indices)]
    n = len(lab)
    groups = _groups(lab)
    _check_feasible(lab, groups)
    eligible = sorted(i for idx in groups.values() for i in idx)
    a = np.empty(n, dtype=np.int64)
    p = np.empty(n, dtype=np.int64)
    q = np.empty(n, dtype=np.int64)
    for k in range(n):
        a[k], p[k] = _positive(lab, groups, eligible, rng)
        q[k] = _pick_negative(lab, a[k], rng)
    return TripletBatch(a, p, q, margin)
