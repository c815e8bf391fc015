"""Experiment configuration: a YAML document validated into ExperimentConfig.

Schema (every key optional except ``dataset.source``)::

    seed: 0                      # global seed; all sub-seeds derive from it
    out: runs/synthetic          # output directory
    dataset:
      source: synthetic          # synthetic | idx | embeddings
      test_fraction: 0.2         # held-out share for synthetic / single-file embeddings
      synthetic: {num_classes: 10, samples_per_class: 200, ...}
      idx: {train_images: ..., train_labels: ..., test_images: ..., test_labels: ...,
            train_limit: null, test_limit: null}
      embeddings: {train: path, test: path}
    architecture: {kind: mlp, layer_dims: [128, 64, 32], conv_spec: {...}}
    train: {losses: [contrastive, triplet], margin: 1.0, lr: 1.0e-3,
            weight_decay: 1.0e-5, batch_size: 64, epochs: 50}
    analysis: {pca_k: 2, t_test: true, greediness_window: 10}
    eval: {knn_k: 5, recall_ks: [1, 5, 10], gallery: test}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .datagen import SyntheticConfig
from .errors import ParseError, ValidationError
from .model import Architecture
from .trainer import LOSS_KINDS, TrainConfig

SOURCES = ("synthetic", "idx", "embeddings")
GALLERY_MODES = ("test", "train")


@dataclass(frozen=True)
class ExperimentConfig:
    source: str = "synthetic"
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    test_fraction: float = 0.2
    idx: dict = field(default_factory=dict)
    embeddings: dict = field(default_factory=dict)
    architecture: Architecture | None = None
    losses: tuple = LOSS_KINDS
    train: TrainConfig = field(default_factory=TrainConfig)
    pca_k: int = 2
    t_test: bool = True
    greediness_window: int = 10
    knn_k: int = 5
    recall_ks: tuple = (1, 5, 10)
    gallery: str = "test"
    out: str = "runs/experiment"
    seed: int = 0

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with CLI overrides (seed, out, losses, epochs) applied."""
        cfg = self
        if kw.get("seed") is not None:
            seed = int(kw["seed"])
            cfg = dataclasses.replace(cfg, seed=seed, synthetic=dataclasses.replace(cfg.synthetic, seed=seed))
        if kw.get("out") is not None:
            cfg = dataclasses.replace(cfg, out=str(kw["out"]))
        if kw.get("losses") is not None:
            cfg = dataclasses.replace(cfg, losses=tuple(kw["losses"]))
        if kw.get("epochs") is not None:
            if int(kw["epochs"]) < 1:
                raise ValidationError("epochs must be >= 1")
            cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, epochs=int(kw["epochs"])))
        if cfg.greediness_window > cfg.train.epochs:
            cfg = dataclasses.replace(cfg, greediness_window=cfg.train.epochs)
        return cfg


def _section(doc, key):
    value = doc.get(key) or {}
    if not isinstance(value, dict):
        raise ValidationError(f"'{key}' must be a mapping")
    return value


def _build(cls, values: dict, where: str, **extra):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ValidationError(f"{where}: unknown field(s) {', '.join(unknown)}")
    try:
        return cls(**{**values, **extra})
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from None


def parse_config(doc: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ValidationError("config root must be a mapping")
    known = {"seed", "out", "dataset", "architecture", "train", "analysis", "eval"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValidationError(f"unknown top-level field(s) {', '.join(unknown)}")

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        raise ValidationError("seed must be an integer in [0, 2^64)")

    ds = _section(doc, "dataset")
    source = ds.get("source", "synthetic")
    if source not in SOURCES:
        raise ValidationError(f"dataset.source must be one of {SOURCES}, got {source!r}")
    syn_values = dict(_section(ds, "synthetic"))
    synthetic = _build(SyntheticConfig, {**syn_values, "seed": syn_values.get("seed", seed)},
                       "dataset.synthetic")
    test_fraction = float(ds.get("test_fraction", 0.2))
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("dataset.test_fraction must lie in (0, 1)")

    def resolve(p):
        path = Path(p)
        return str(path if path.is_absolute() else base_dir / path)

    idx = dict(_section(ds, "idx"))
    embeddings = dict(_section(ds, "embeddings"))
    if source == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if key not in idx:
                raise ValidationError(f"dataset.idx.{key} is required for source 'idx'")
            idx[key] = resolve(idx[key])
            if not Path(idx[key]).is_file():
                raise ValidationError(f"dataset.idx.{key}: file not found: {idx[key]}")
    if source == "embeddings":
        if "train" not in embeddings:
            raise ValidationError("dataset.embeddings.train is required for source 'embeddings'")
        for key in ("train", "test"):
            if key in embeddings:
                embeddings[key] = resolve(embeddings[key])
                if not Path(embeddings[key]).is_file():
                    raise ValidationError(f"dataset.embeddings.{key}: file not found: {embeddings[key]}")

    arch_doc = _section(doc, "architecture")
    architecture = None
    if arch_doc:
        try:
            architecture = Architecture(arch_doc["kind"], tuple(arch_doc["layer_dims"]), arch_doc.get("conv_spec"))
        except KeyError as exc:
            raise ValidationError(f"architecture.{exc.args[0]} is required") from None
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"architecture: {exc}") from None

    tr = dict(_section(doc, "train"))
    losses = tr.pop("losses", list(LOSS_KINDS))
    if isinstance(losses, str):
        losses = list(LOSS_KINDS) if losses == "both" else [losses]
    if not losses or any(l not in LOSS_KINDS for l in losses):
        raise ValidationError(f"train.losses must be drawn from {LOSS_KINDS}")
    if "margin" in tr and not (isinstance(tr["margin"], (int, float)) and tr["margin"] > 0):
        raise ValidationError("train.margin must be > 0")
    train = _build(TrainConfig, tr, "train", loss_kind=losses[0], seed=seed)

    an = _section(doc, "analysis")
    ev = _section(doc, "eval")
    gallery = ev.get("gallery", "test")
    if gallery not in GALLERY_MODES:
        raise ValidationError(f"eval.gallery must be one of {GALLERY_MODES}")
    recall_ks = tuple(sorted(int(k) for k in ev.get("recall_ks", (1, 5, 10))))
    if not recall_ks or recall_ks[0] < 1:
        raise ValidationError("eval.recall_ks must be positive integers")
    cfg = ExperimentConfig(
        source=source,
        synthetic=synthetic,
        test_fraction=test_fraction,
        idx=idx,
        embeddings=embeddings,
        architecture=architecture,
        losses=tuple(losses),
        train=train,
        pca_k=int(an.get("pca_k", 2)),
        t_test=bool(an.get("t_test", True)),
        greediness_window=int(an.get("greediness_window", 10)),
        knn_k=int(ev.get("knn_k", 5)),
        recall_ks=recall_ks,
        gallery=gallery,
        out=str(doc.get("out", "runs/experiment")),
        seed=seed,
    )
    if cfg.pca_k < 1:
        raise ValidationError("analysis.pca_k must be >= 1")
    if cfg.knn_k < 1:
        raise ValidationError("eval.knn_k must be >= 1")
    if not 1 <= cfg.greediness_window:
        raise ValidationError("analysis.greediness_window must be >= 1")
    return cfg


def validate_config(path) -> ExperimentConfig:
    """Parse and cross-check a YAML config file."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    text = path.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"{path}{where}: {getattr(exc, 'problem', exc)}") from None
    return parse_config(doc, base_dir=path.parent)
