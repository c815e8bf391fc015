"""Mini-batch training with per-epoch greediness diagnostics."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import OUTLIER, Dataset
from .errors import InfeasibleBatch, NonFiniteLoss
from .losses import contrastive_loss, sample_pairs, sample_triplets, triplet_loss
from .model import Architecture, encode, encode_backward, init_params
from .numcore.adam import AdamState, adam_step
from .numcore.rng import RngStream

log = logging.getLogger(__name__)

LOSS_KINDS = ("contrastive", "triplet")

# sub-stream keys derived from TrainConfig.seed
_INIT, _SHUFFLE, _SAMPLE = 0, 1, 2


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "contrastive"
    margin: float = 1.0
    lr: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 4:
            raise ValueError("batch_size must be >= 4")
        if not self.margin > 0:
            raise ValueError("margin must be > 0")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    active_ratio: float
    grad_norm: float


@dataclass
class DiagnosticsTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def mean_loss(self) -> np.ndarray:
        return np.array([r.mean_loss for r in self.records])

    @property
    def active_ratio(self) -> np.ndarray:
        return np.array([r.active_ratio for r in self.records])

    @property
    def grad_norm(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])

    @classmethod
    def from_series(cls, mean_loss, active_ratio=None, grad_norm=None):
        n = len(mean_loss)
        active_ratio = [0.0] * n if active_ratio is None else active_ratio
        grad_norm = [0.0] * n if grad_norm is None else grad_norm
        return cls([EpochRecord(i + 1, float(l), float(a), float(g))
                    for i, (l, a, g) in enumerate(zip(mean_loss, active_ratio, grad_norm))])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "mean_loss", "active_ratio", "grad_norm"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.mean_loss), repr(r.active_ratio), repr(r.grad_norm)])

    @classmethod
    def from_csv(cls, path) -> "DiagnosticsTrace":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        return cls([EpochRecord(int(r["epoch"]), float(r["mean_loss"]), float(r["active_ratio"]),
                                float(r["grad_norm"])) for r in rows])


def batch_diagnostics(loss_out, param_grads) -> tuple[float, float]:
    """Active ratio of the loss items and L2 norm of all parameter gradients together."""
    n = len(loss_out.per_item)
    active = float(np.count_nonzero(loss_out.active_mask)) / n if n else 0.0
    sq = sum(float(np.sum(np.square(g))) for g in param_grads)
    return active, math.sqrt(sq)


def _batches_feasible(labels, batches) -> bool:
    for b in batches:
        lab = labels[b]
        inliers = lab[lab != OUTLIER]
        if len(np.unique(lab)) < 2 or len(inliers) == len(np.unique(inliers)):
            return False
    return True


def epoch_batches(labels, batch_size: int, rng: RngStream) -> list:
    """Shuffled partition into ceil(N / batch_size) near-equal batches.

    A partition with an infeasible batch is redrawn once; a second failure
    raises InfeasibleBatch.
    """
    n = len(labels)
    count = math.ceil(n / batch_size)
    for _ in range(2):
        batches = np.array_split(rng.permutation(n), count)
        if _batches_feasible(labels, batches):
            return batches
    raise InfeasibleBatch("batch assignment infeasible after one resample")


def loss_and_grads(params, arch, features, labels, batch_idx, cfg: TrainConfig, rng: RngStream):
    """Sample items for one batch, evaluate the loss and backpropagate to the parameters."""
    emb, cache = encode(params, arch, features[batch_idx])
    if cfg.loss_kind == "contrastive":
        items = sample_pairs(labels, batch_idx, rng, cfg.margin)
        out = contrastive_loss(emb, items)
    else:
        items = sample_triplets(labels, batch_idx, rng, cfg.margin)
        out = triplet_loss(emb, items)
    return out, encode_backward(cache, out.grad_embeddings)


def train(dataset: Dataset, arch: Architecture, cfg: TrainConfig, progress=None):
    """Train an encoder with Adam; returns ``(params, DiagnosticsTrace)``.

    ``progress``, when given, is called with each finished EpochRecord.
    """
    labels = np.asarray(dataset.labels)
    if len(labels) == 0:
        raise ValueError("dataset is empty")
    if len(np.unique(labels[labels != OUTLIER])) < 2:
        raise InfeasibleBatch("training needs at least two non-outlier classes")
    features = np.asarray(dataset.features, dtype=np.float64)

    root = RngStream(cfg.seed)
    params = init_params(arch, root.child(_INIT))
    shuffle_rng = root.child(_SHUFFLE)
    sample_rng = root.child(_SAMPLE)
    state = AdamState.init(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    trace = DiagnosticsTrace()

    for epoch in range(1, cfg.epochs + 1):
        losses, ratios, norms = [], [], []
        for batch_idx in epoch_batches(labels, cfg.batch_size, shuffle_rng):
            out, grads = loss_and_grads(params, arch, features, labels, batch_idx, cfg, sample_rng)
            if not math.isfinite(out.total):
                raise NonFiniteLoss(f"non-finite loss in epoch {epoch}", trace)
            active, gnorm = batch_diagnostics(out, grads)
            losses.append(out.total)
            ratios.append(active)
            norms.append(gnorm)
            params, state = adam_step(params, grads, state)
        rec = EpochRecord(epoch, float(np.mean(losses)), float(np.mean(ratios)), float(np.mean(norms)))
        trace.records.append(rec)
        log.debug("%s epoch %d loss=%.5f active=%.3f gnorm=%.4f", cfg.loss_kind, epoch,
                  rec.mean_loss, rec.active_ratio, rec.grad_norm)
        if progress is not None:
            progress(rec)
    return params, trace
