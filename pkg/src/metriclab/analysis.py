"""Embedding-structure statistics, greediness summaries, paired t-test and PCA."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datagen import OUTLIER
from .errors import (
    ConvergenceFailure,
    DegenerateInput,
    ShapeMismatch,
    TooFewClasses,
    TooFewSamples,
)
from .numcore.rng import RngStream


@dataclass(frozen=True)
class VarianceReport:
    per_class_intra: dict
    intra_mean: float
    intra_var: float
    inter_mean_sq: float
    inter_mean_dist: float
    inter_var: float
    num_classes: int

    def to_dict(self) -> dict:
        return {
            "per_class_intra": {str(k): v for k, v in self.per_class_intra.items()},
            "intra_mean": self.intra_mean,
            "intra_var": self.intra_var,
            "inter_mean_sq": self.inter_mean_sq,
            "inter_mean_dist": self.inter_mean_dist,
            "inter_var": self.inter_var,
            "num_classes": self.num_classes,
        }


def variance_report(embeddings, labels) -> VarianceReport:
    """Intra-class spread and centroid separation, outliers ignored.

    ``per_class_intra[c]`` is the mean squared distance of class ``c`` to its
    centroid (divide by N_c); ``intra_mean``/``intra_var`` are the mean and
    population variance of those values across classes.  ``inter_mean_sq``
    averages squared centroid distances over ordered pairs c != c';
    ``inter_mean_dist``/``inter_var`` are the mean and population variance of
    the unsquared pairwise centroid distances.
    """
    z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim != 2 or len(z) != len(y):
        raise ShapeMismatch(f"embeddings {z.shape} vs {len(y)} labels")
    classes = np.unique(y[y != OUTLIER])
    if len(classes) < 2:
        raise TooFewClasses(f"need at least 2 classes, got {len(classes)}")
    centroids = np.empty((len(classes), z.shape[1]))
    per_class = {}
    for k, c in enumerate(classes):
        zc = z[y == c]
        if len(zc) < 2:
            raise TooFewSamples(f"class {int(c)} has {len(zc)} sample(s)")
        centroids[k] = zc.mean(axis=0)
        per_class[int(c)] = float(np.mean(np.sum((zc - centroids[k]) ** 2, axis=1)))
    intra = np.array(list(per_class.values()))

    C = len(classes)
    diff = centroids[:, None, :] - centroids[None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    iu = np.triu_indices(C, k=1)
    dists = np.sqrt(sq[iu])
    return VarianceReport(
        per_class_intra=per_class,
        intra_mean=float(intra.mean()),
        intra_var=float(intra.var()),
        inter_mean_sq=float(sq.sum() / (C * (C - 1))),
        inter_mean_dist=float(dists.mean()),
        inter_var=float(dists.var()),
        num_classes=C,
    )


def loss_decay_epoch(trace) -> int | None:
    """First (1-indexed) epoch whose mean loss is at most 10% of the first epoch's."""
    losses = trace.mean_loss if hasattr(trace, "mean_loss") else np.asarray(trace, dtype=float)
    if len(losses) == 0:
        raise ValueError("empty trace")
    threshold = 0.1 * losses[0]
    for e, value in enumerate(losses, start=1):
        if value <= threshold:
            return e
    return None


# --- Student t ---------------------------------------------------------------

def _betacf(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ConvergenceFailure(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the continued fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc_regularized(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a, b) -> tuple[float, float]:
    """Two-sided paired t-test on ``a - b``; returns ``(t, p)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeMismatch("paired samples must be 1-D and of equal length")
    n = len(a)
    if n < 2:
        raise DegenerateInput("need at least 2 pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise DegenerateInput("all paired differences are identical")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    return t, student_t_two_sided_p(t, n - 1)


# --- PCA ----------------------------------------------------------------------

PCA_MAX_ITER = 20000
PCA_TOL = 1e-12


def _top_eigvec(C, basis, start, tol, max_iter):
    """Power iteration restricted to the orthogonal complement of ``basis``."""
    scale = max(1.0, float(np.linalg.norm(C, 2)))

    def project(v):
        for u in basis:
            v = v - (u @ v) * u
        return v

    v = project(start)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = project(C @ v)
        lam = float(v @ w)
        resid = np.linalg.norm(w - lam * v)
        if resid <= tol * scale:
            return v, max(lam, 0.0)
        norm = np.linalg.norm(w)
        if norm <= tol * scale:
            # remaining spectrum is numerically zero; any unit vector here is an eigenvector
            return v, 0.0
        v = w / norm
    raise ConvergenceFailure(f"power iteration did not converge in {max_iter} iterations")


def pca_project(embeddings, k: int, tol: float = PCA_TOL, max_iter: int = PCA_MAX_ITER, seed: int = 0):
    """Top-``k`` principal components by power iteration with deflation.

    Returns ``(projected, components, explained_fraction)``: the centred data
    projected onto the components (N x k), the components as rows (k x D),
    and each component's share of the total variance.  Each component's sign
    is fixed so that its largest-magnitude entry is positive.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ShapeMismatch("PCA needs a 2-D array with at least 2 rows")
    n, dim = X.shape
    if not 1 <= k <= min(n, dim):
        raise ValueError(f"k must lie in [1, {min(n, dim)}]")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / n
    total = float(np.trace(cov))

    rng = RngStream(seed)
    comps, eigvals = [], []
    for _ in range(k):
        v, lam = _top_eigvec(cov, comps, rng.normal(dim), tol, max_iter)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        comps.append(v)
        eigvals.append(lam)
    components = np.array(comps)
    # deflated power iteration can return near-equal eigenvalues out of order
    order = np.argsort(-np.array(eigvals), kind="stable")
    components = components[order]
    eigvals = np.array(eigvals)[order]
    explained = eigvals / total if total > 0 else np.zeros(k)
    return Xc @ components.T, components, [float(e) for e in explained]


# --- greediness ---------------------------------------------------------------

@dataclass(frozen=True)
class GreedinessReport:
    decay_epoch: int | None
    mean_active_ratio: float
    mean_grad_norm: float
    window: int

    def to_dict(self) -> dict:
        return {
            "decay_epoch": self.decay_epoch,
            "mean_active_ratio": self.mean_active_ratio,
            "mean_grad_norm": self.mean_grad_norm,
            "window": self.window,
        }


def greediness_report(trace, window: int = 10) -> GreedinessReport:
    if not 1 <= window <= len(trace):
        raise ValueError(f"window must lie in [1, {len(trace)}]")
    return GreedinessReport(
        decay_epoch=loss_decay_epoch(trace),
        mean_active_ratio=float(np.mean(trace.active_ratio[-window:])),
        mean_grad_norm=float(np.mean(trace.grad_norm[-window:])),
        window=window,
    )


def decays_earlier(first: int | None, second: int | None) -> bool:
    """``first < second`` where None (never decayed) counts as later than any epoch."""
    if first is None:
        return False
    return second is None or first < second
