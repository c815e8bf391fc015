"""Command-line driver.

    metriclab compare-losses --config configs/synthetic.yaml --out runs/syn
    metriclab generate|train|analyze|eval|report ...
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import report as rpt
from .config import ExperimentConfig, validate_config
from .datagen import save_embeddings
from .errors import MetricLabError
from .experiment import (
    StageError,
    _stage,
    analyze_loss,
    compare,
    config_summary,
    default_architecture,
    eval_loss,
    load_data,
    load_trained,
    run_experiment,
    run_training,
)

log = logging.getLogger("metriclab")

COMMANDS = ("generate", "train", "analyze", "eval", "compare-losses", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metriclab", description="Contrastive vs triplet metric-learning lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML experiment config (defaults: synthetic data)")
        p.add_argument("--seed", type=int, help="global seed (u64)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--loss", choices=("contrastive", "triplet", "both"), default=None)
        p.add_argument("--epochs", type=int)
        p.add_argument("--quiet", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = validate_config(args.config) if args.config else ExperimentConfig()
    losses = None
    if args.loss:
        losses = ("contrastive", "triplet") if args.loss == "both" else (args.loss,)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise MetricLabError("--seed must be an unsigned 64-bit integer")
    return cfg.with_overrides(seed=args.seed, out=args.out, losses=losses, epochs=args.epochs)


def cmd_generate(cfg, out):
    with _stage("data"):
        tr, te = load_data(cfg)
        save_embeddings(tr, out / "train.emb1")
        save_embeddings(te, out / "test.emb1")
    print(f"wrote {out / 'train.emb1'} ({len(tr)} rows) and {out / 'test.emb1'} ({len(te)} rows)")


def cmd_train(cfg, out):
    with _stage("data"):
        tr, _ = load_data(cfg)
    arch = default_architecture(cfg, tr)
    for loss, (_, trace) in run_training(cfg, out, tr, arch).items():
        print(f"{loss}: {len(trace)} epochs, final loss {trace.mean_loss[-1]:.6f}")


def _trained_losses(cfg, out):
    found = [l for l in cfg.losses if (out / f"checkpoint_{l}.bin").exists()]
    if not found:
        raise MetricLabError(f"no checkpoints in {out}; run 'train' first")
    return found


def cmd_analyze(cfg, out):
    with _stage("data"):
        _, te = load_data(cfg)
    per_loss = {}
    for loss in _trained_losses(cfg, out):
        arch, params, trace = load_trained(out, loss)
        res = analyze_loss(cfg, out, loss, params, arch, trace, te)
        res.pop("embeddings")
        per_loss[loss] = res
    doc = {"comparison": compare(per_loss, cfg.t_test),
           "losses": {l: {**r, "variance": r["variance"].to_dict()} for l, r in per_loss.items()}}
    rpt.write_json(doc, out / "analysis.json")
    print(json.dumps(doc["comparison"], sort_keys=True))


def cmd_eval(cfg, out):
    with _stage("data"):
        tr, te = load_data(cfg)
    doc = {}
    for loss in _trained_losses(cfg, out):
        arch, params, _ = load_trained(out, loss)
        doc[loss] = eval_loss(cfg, loss, params, arch, tr, te)
        print(f"{loss}: knn acc {doc[loss]['knn_accuracy']:.4f}, recall {doc[loss]['recall']['recall_at']}")
    rpt.write_json(doc, out / "eval.json")


def cmd_compare(cfg, out):
    report = run_experiment(cfg)
    print(rpt.render_tables(report), end="")
    print(f"report: {out / 'report.json'}")


def cmd_report(cfg, out):
    path = out / "report.json"
    if not path.exists():
        raise MetricLabError(f"{path} not found; run 'compare-losses' first")
    print(rpt.render_tables(json.loads(path.read_text())), end="")


HANDLERS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "analyze": cmd_analyze,
    "eval": cmd_eval,
    "compare-losses": cmd_compare,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, out)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MetricLabError as exc:
        print(f"error: stage 'config': {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
