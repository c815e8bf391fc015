"""Datasets: the synthetic cluster generator plus MNIST IDX and embedding-file ingestion."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    CountMismatch,
    NonFiniteValue,
    ShapeHeaderMismatch,
    TruncatedFile,
)
from .numcore.linalg import cholesky_factor
from .numcore.rng import RngStream, gaussian_matrix

OUTLIER = -1

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
EMB1_MAGIC = b"EMB1"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise CountMismatch(f"{len(self.features)} feature rows vs {len(self.labels)} labels")
        if np.any(self.labels < OUTLIER):
            raise ValueError("labels must be >= -1")

    def __len__(self):
        return len(self.labels)

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels[self.labels != OUTLIER])

    def subset(self, idx, name=None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx], name or self.name)

    def without_outliers(self) -> "Dataset":
        return self.subset(np.flatnonzero(self.labels != OUTLIER))


@dataclass(frozen=True)
class SyntheticConfig:
    num_classes: int = 10
    samples_per_class: int = 200
    dim: int = 128
    center_scale: float = 5.0
    noise_scale: float = 1.4
    jitter: float = 1e-3
    overlap_prob: float = 0.1
    outlier_fraction: float = 0.05
    outlier_sigma: float = 15.0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_classes", "samples_per_class", "dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("overlap_prob", "outlier_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("center_scale", "noise_scale", "jitter", "outlier_sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def num_outliers(self) -> int:
        return math.floor(self.num_classes * self.samples_per_class * self.outlier_fraction)


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Gaussian clusters with per-class random covariance, label noise and outliers.

    Draw order from a single stream seeded by ``cfg.seed``: the centre matrix
    (C x d); then per class, its mixing matrix A_c (d x d) and its point
    noise (n x d); then per-point overlap uniforms and replacement classes
    (n_total each); finally the outliers.
    """
    rng = RngStream(cfg.seed)
    C, n, d = cfg.num_classes, cfg.samples_per_class, cfg.dim
    centers = cfg.center_scale * gaussian_matrix(rng, C, d)

    points = np.empty((C * n, d))
    true_labels = np.repeat(np.arange(C), n)
    eye = np.eye(d)
    for c in range(C):
        A = gaussian_matrix(rng, d, d)
        L = cholesky_factor(A @ A.T + cfg.jitter * eye)
        z = gaussian_matrix(rng, n, d)
        points[c * n:(c + 1) * n] = centers[c] + cfg.noise_scale * (z @ L.T)

    flip = rng.uniform(C * n) < cfg.overlap_prob
    replacement = rng.integers(C, C * n)
    labels = np.where(flip, replacement, true_labels)

    n_out = cfg.num_outliers
    if n_out:
        outliers = cfg.outlier_sigma * rng.normal((n_out, d))
        points = np.vstack([points, outliers])
        labels = np.concatenate([labels, np.full(n_out, OUTLIER)])
    return Dataset(points, labels.astype(np.int64), name=f"synthetic-seed{cfg.seed}")


def train_test_split(ds: Dataset, test_fraction: float, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Per-label shuffled split; each label (outliers included) keeps its share in both halves."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    train_idx, test_idx = [], []
    for lab in np.unique(ds.labels):
        idx = np.flatnonzero(ds.labels == lab)
        idx = idx[rng.permutation(len(idx))]
        k = int(round(len(idx) * test_fraction))
        test_idx.append(idx[:k])
        train_idx.append(idx[k:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    return ds.subset(tr, ds.name + "-train"), ds.subset(te, ds.name + "-test")


# --- MNIST IDX -------------------------------------------------------------

def _read_idx(path, expected_magic: int, ndims: int):
    raw = Path(path).read_bytes()
    header = 4 + 4 * ndims
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, too short for a magic number")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if len(raw) < header:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header needs {header}")
    dims = struct.unpack(f">{ndims}I", raw[4:header])
    size = math.prod(dims)
    if len(raw) - header < size:
        raise TruncatedFile(f"{path}: payload has {len(raw) - header} bytes, header promises {size}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path, image_mode: bool = False, limit: int | None = None) -> Dataset:
    """Read an IDX image/label file pair; pixels are scaled to [0, 1].

    Features come back flattened (N x rows*cols) unless ``image_mode``,
    which gives N x 1 x rows x cols.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images vs {labels.shape[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    n, rows, cols = images.shape
    feats = images.astype(np.float64) / 255.0
    feats = feats.reshape(n, 1, rows, cols) if image_mode else feats.reshape(n, rows * cols)
    return Dataset(feats, labels.astype(np.int64), name=Path(images_path).name)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images (N x rows x cols) and labels in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


# --- precomputed embeddings --------------------------------------------------
# EMB1: b"EMB1", u32 N, u32 D, N*D float32 row-major, N int32 labels; all little-endian.

def save_embeddings(ds: Dataset, path) -> None:
    feats = np.asarray(ds.features)
    if feats.ndim != 2:
        raise ShapeHeaderMismatch(f"embeddings must be 2-D, got {feats.shape}")
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["label"] + [f"f{j}" for j in range(feats.shape[1])])
            for lab, row in zip(ds.labels, feats):
                w.writerow([int(lab)] + [repr(float(v)) for v in row])
        return
    n, d = feats.shape
    with open(path, "wb") as f:
        f.write(EMB1_MAGIC)
        f.write(struct.pack("<II", n, d))
        f.write(feats.astype("<f4").tobytes())
        f.write(np.asarray(ds.labels).astype("<i4").tobytes())


def load_embeddings(path) -> Dataset:
    """Load an EMB1 binary or a ``label,f0,...`` CSV file; values are kept as stored."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == EMB1_MAGIC:
        feats, labels = _parse_emb1(raw, path)
    elif path.suffix.lower() == ".csv":
        feats, labels = _parse_csv(raw.decode("utf-8"), path)
    else:
        raise BadMagic(f"{path}: neither EMB1 magic nor a .csv file")
    if not np.all(np.isfinite(feats)):
        bad = np.argwhere(~np.isfinite(feats))[0]
        raise NonFiniteValue(f"{path}: non-finite feature at row {bad[0]}, column {bad[1]}")
    return Dataset(feats, labels, name=path.stem)


def _parse_emb1(raw: bytes, path):
    if len(raw) < 12:
        raise ShapeHeaderMismatch(f"{path}: truncated header")
    n, d = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * n * d + 4 * n
    if len(raw) != expected:
        raise ShapeHeaderMismatch(f"{path}: header says N={n}, D={d} ({expected} bytes), file has {len(raw)}")
    feats = np.frombuffer(raw, dtype="<f4", count=n * d, offset=12).reshape(n, d).astype(np.float64)
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=12 + 4 * n * d).astype(np.int64)
    return feats, labels


def _parse_csv(text: str, path):
    rows = list(csv.reader(text.splitlines()))
    if not rows or not rows[0] or rows[0][0].strip() != "label":
        raise BadMagic(f"{path}: CSV header must start with 'label'")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if header[1:] != [f"f{j}" for j in range(d)]:
        raise ShapeHeaderMismatch(f"{path}: feature columns must be f0..f{d - 1}")
    body = [r for r in rows[1:] if r]
    feats = np.empty((len(body), d))
    labels = np.empty(len(body), dtype=np.int64)
    for i, r in enumerate(body):
        if len(r) != d + 1:
            raise ShapeHeaderMismatch(f"{path}: line {i + 2} has {len(r)} fields, expected {d + 1}")
        labels[i] = int(r[0])
        feats[i] = [float(v) for v in r[1:]]
    return feats, labels
