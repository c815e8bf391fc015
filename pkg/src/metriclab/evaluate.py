"""Downstream evaluation: kNN classification and recall@k retrieval (Euclidean)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import OUTLIER
from .errors import EmptySet, KTooLarge, ShapeMismatch


@dataclass(frozen=True)
class RetrievalResult:
    recall_at: dict
    num_queries: int
    ks: list

    def to_dict(self) -> dict:
        return {
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
            "num_queries": self.num_queries,
            "ks": list(self.ks),
        }


def _drop_outliers(emb, labels):
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    if emb.ndim != 2 or len(emb) != len(labels):
        raise ShapeMismatch(f"embeddings {emb.shape} vs {len(labels)} labels")
    keep = labels != OUTLIER
    return emb[keep], labels[keep]


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0)


def _ranked(query, gallery, exclude_self: bool, chunk: int = 512):
    """Yield, per query chunk, (row offset, gallery order by distance, distances).

    Ties keep ascending gallery index (stable sort).
    """
    for lo in range(0, len(query), chunk):
        d = np.sqrt(pairwise_sq_dists(query[lo:lo + chunk], gallery))
        if exclude_self:
            rows = np.arange(d.shape[0])
            d[rows, lo + rows] = np.inf
        yield lo, np.argsort(d, axis=1, kind="stable"), d


def knn_classify(train_emb, train_labels, test_emb, test_labels, k: int = 5) -> float:
    """Accuracy of majority-vote kNN.

    Vote ties go to the class with the smaller summed neighbour distance,
    then to the smaller class id.
    """
    tr, ytr = _drop_outliers(train_emb, train_labels)
    te, yte = _drop_outliers(test_emb, test_labels)
    if len(tr) == 0 or len(te) == 0:
        raise EmptySet("train and test sets must be non-empty after removing outliers")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, len(tr))
    correct = 0
    for lo, order, d in _ranked(te, tr, exclude_self=False):
        for r in range(order.shape[0]):
            nn = order[r, :k]
            votes = {}
            for j in nn:
                c = int(ytr[j])
                count, dist = votes.get(c, (0, 0.0))
                votes[c] = (count + 1, dist + d[r, j])
            pred = min(votes, key=lambda c: (-votes[c][0], votes[c][1], c))
            correct += pred == yte[lo + r]
    return correct / len(te)


def recall_at_k(query_emb, query_labels, gallery_emb, gallery_labels, ks=(1, 5, 10),
                exclude_self: bool = False) -> RetrievalResult:
    """Fraction of queries with a same-label item among their k nearest gallery items.

    With ``exclude_self`` the query and gallery sets must be the same and each
    query's own row is skipped (leave-one-out).
    """
    q, yq = _drop_outliers(query_emb, query_labels)
    g, yg = _drop_outliers(gallery_emb, gallery_labels)
    if len(q) == 0 or len(g) == 0:
        raise EmptySet("query and gallery sets must be non-empty after removing outliers")
    if exclude_self and q.shape != g.shape:
        raise ShapeMismatch("exclude_self requires identical query and gallery sets")
    ks = sorted(int(k) for k in ks)
    available = len(g) - (1 if exclude_self else 0)
    if ks[0] < 1 or ks[-1] > available:
        raise KTooLarge(f"k must lie in [1, {available}], got {ks}")
    kmax = ks[-1]
    hits = {k: 0 for k in ks}
    for lo, order, _ in _ranked(q, g, exclude_self):
        same = yg[order[:, :kmax]] == yq[lo:lo + order.shape[0], None]
        first = np.where(same.any(axis=1), same.argmax(axis=1), kmax)
        for k in ks:
            hits[k] += int(np.count_nonzero(first < k))
    n = len(q)
    return RetrievalResult({k: hits[k] / n for k in ks}, n, ks)
