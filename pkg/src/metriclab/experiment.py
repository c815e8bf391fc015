"""End-to-end pipeline: data -> training per loss -> analysis -> evaluation -> report."""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path

import numpy as np

from . import report as rpt
from .analysis import (
    greediness_report,
    paired_t_test,
    pca_project,
    variance_report,
)
from .config import ExperimentConfig
from .datagen import Dataset, generate_synthetic, load_embeddings, load_idx, train_test_split
from .errors import DegenerateInput, MetricLabError
from .evaluate import knn_classify, recall_at_k
from .model import Architecture, encode, load_checkpoint, save_checkpoint
from .numcore.rng import RngStream
from .trainer import DiagnosticsTrace, train

log = logging.getLogger(__name__)

# sub-stream keys derived from the global seed
_SPLIT, _TRAIN = 1, 2


class StageError(MetricLabError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Train/test datasets for the configured source."""
    root = RngStream(cfg.seed)
    if cfg.source == "synthetic":
        ds = generate_synthetic(cfg.synthetic)
        return train_test_split(ds, cfg.test_fraction, root.child(_SPLIT))
    if cfg.source == "idx":
        # flattened rows; the CNN encoder reshapes them to images
        tr = load_idx(cfg.idx["train_images"], cfg.idx["train_labels"], limit=cfg.idx.get("train_limit"))
        te = load_idx(cfg.idx["test_images"], cfg.idx["test_labels"], limit=cfg.idx.get("test_limit"))
        return tr, te
    tr = load_embeddings(cfg.embeddings["train"])
    if "test" in cfg.embeddings:
        return tr, load_embeddings(cfg.embeddings["test"])
    return train_test_split(tr, cfg.test_fraction, root.child(_SPLIT))


def default_architecture(cfg: ExperimentConfig, train_ds: Dataset) -> Architecture:
    if cfg.architecture is not None:
        return cfg.architecture
    if cfg.source == "synthetic":
        return Architecture.mlp((train_ds.features.shape[1], 64, 32))
    if cfg.source == "idx":
        return Architecture.cnn()
    return Architecture.head(train_ds.features.shape[1], 512)


def train_config(cfg: ExperimentConfig, loss: str):
    seed = RngStream(cfg.seed).child(_TRAIN).seed
    return dataclasses.replace(cfg.train, loss_kind=loss, seed=seed)


def embed(params, arch, features, chunk=1024):
    parts = [encode(params, arch, features[i:i + chunk])[0] for i in range(0, len(features), chunk)]
    return np.vstack(parts)


def run_training(cfg: ExperimentConfig, out: Path, tr: Dataset, arch: Architecture, losses=None) -> dict:
    """Train each loss, writing ``trace_<loss>.csv`` and ``checkpoint_<loss>.bin``."""
    results = {}
    for loss in losses or cfg.losses:
        with _stage(f"train:{loss}"):
            params, trace = train(tr, arch, train_config(cfg, loss))
            trace.to_csv(out / f"trace_{loss}.csv")
            save_checkpoint(out / f"checkpoint_{loss}.bin", arch, params)
        results[loss] = (params, trace)
    return results


def analyze_loss(cfg, out, loss, params, arch, trace, te: Dataset) -> dict:
    with _stage(f"analyze:{loss}"):
        emb = embed(params, arch, te.features)
        inl = te.labels != -1
        var = variance_report(emb, te.labels)
        greed = greediness_report(trace, min(cfg.greediness_window, len(trace)))
        k = min(cfg.pca_k, emb.shape[1], int(inl.sum()))
        projected, _, explained = pca_project(emb[inl], k)
        rpt.write_pca_csv(out / f"pca_{loss}.csv", te.labels[inl], projected)
        if k >= 2:
            rpt.write_scatter_svg(out / f"pca_{loss}.svg", te.labels[inl], projected[:, :2], title=f"PCA, {loss} loss")
    return {
        "variance": var,
        "greediness": greed.to_dict(),
        "pca_explained": explained,
        "final_loss": float(trace.mean_loss[-1]),
        "embeddings": emb,
    }


def eval_loss(cfg, loss, params, arch, tr: Dataset, te: Dataset, te_emb=None) -> dict:
    with _stage(f"eval:{loss}"):
        tr_emb = embed(params, arch, tr.features)
        te_emb = embed(params, arch, te.features) if te_emb is None else te_emb
        acc = knn_classify(tr_emb, tr.labels, te_emb, te.labels, cfg.knn_k)
        if cfg.gallery == "test":
            rec = recall_at_k(te_emb, te.labels, te_emb, te.labels, cfg.recall_ks, exclude_self=True)
        else:
            rec = recall_at_k(te_emb, te.labels, tr_emb, tr.labels, cfg.recall_ks, exclude_self=False)
    return {"knn_accuracy": acc, "recall": rec.to_dict()}


def config_summary(cfg: ExperimentConfig, arch: Architecture) -> dict:
    doc = {
        "seed": cfg.seed,
        "source": cfg.source,
        "test_fraction": cfg.test_fraction,
        "architecture": arch.to_dict(),
        "losses": list(cfg.losses),
        "train": {k: v for k, v in dataclasses.asdict(cfg.train).items() if k not in ("loss_kind", "seed")},
        "analysis": {"pca_k": cfg.pca_k, "t_test": cfg.t_test, "greediness_window": cfg.greediness_window},
        "eval": {"knn_k": cfg.knn_k, "recall_ks": list(cfg.recall_ks), "gallery": cfg.gallery},
    }
    if cfg.source == "synthetic":
        doc["synthetic"] = dataclasses.asdict(cfg.synthetic)
    return doc


def compare(per_loss: dict, t_test: bool) -> dict:
    out = {}
    if {"contrastive", "triplet"} <= set(per_loss):
        con = per_loss["contrastive"]["variance"]
        tri = per_loss["triplet"]["variance"]
        out["intra_ratio"] = tri.intra_mean / con.intra_mean if con.intra_mean > 0 else None
        if t_test:
            classes = sorted(set(con.per_class_intra) & set(tri.per_class_intra))
            a = [tri.per_class_intra[c] for c in classes]
            b = [con.per_class_intra[c] for c in classes]
            try:
                t, p = paired_t_test(a, b)
                out["t_test"] = {"t": t, "p": p, "n": len(classes)}
            except DegenerateInput as exc:
                out["t_test"] = {"t": None, "p": None, "n": len(classes), "error": str(exc)}
    return out


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run the whole pipeline and write every artifact into ``cfg.out``; returns the report."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with _stage("data"):
        tr, te = load_data(cfg)
    arch = default_architecture(cfg, tr)
    trained = run_training(cfg, out, tr, arch)

    per_loss = {}
    for loss, (params, trace) in trained.items():
        res = analyze_loss(cfg, out, loss, params, arch, trace, te)
        res.update(eval_loss(cfg, loss, params, arch, tr, te, res.pop("embeddings")))
        res["files"] = {
            "trace": f"trace_{loss}.csv",
            "checkpoint": f"checkpoint_{loss}.bin",
            "pca_csv": f"pca_{loss}.csv",
        }
        if (out / f"pca_{loss}.svg").exists():
            res["files"]["pca_svg"] = f"pca_{loss}.svg"
        per_loss[loss] = res

    with _stage("report"):
        report = {
            "config": config_summary(cfg, arch),
            "dataset": {
                "name": tr.name,
                "n_train": len(tr),
                "n_test": len(te),
                "feature_shape": list(tr.features.shape[1:]),
                "num_classes": int(len(tr.classes)),
            },
            "comparison": compare(per_loss, cfg.t_test),
            "losses": {},
        }
        for loss, res in per_loss.items():
            res["variance"] = res["variance"].to_dict()
            report["losses"][loss] = res
        rpt.write_json(report, out / "report.json")
        (out / "report.txt").write_text(rpt.render_tables(report))
    return report


def load_trained(out: Path, loss: str):
    arch, params = load_checkpoint(out / f"checkpoint_{loss}.bin")
    trace = DiagnosticsTrace.from_csv(out / f"trace_{loss}.csv")
    return arch, params, trace
