"""Serialization of run artifacts: JSON report, PCA CSV, SVG scatter, text tables."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
OUTLIER_COLOR = "#000000"


def write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_pca_csv(path, labels, projected) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["label", "pc1", "pc2"])
        for lab, row in zip(labels, projected):
            pc2 = row[1] if len(row) > 1 else 0.0
            w.writerow([int(lab), repr(float(row[0])), repr(float(pc2))])


def write_scatter_svg(path, labels, projected, title="", size=480, margin=40) -> None:
    """Top-2 PCA scatter coloured by class, with a legend; outliers in black."""
    pts = np.asarray(projected, dtype=np.float64)
    x = pts[:, 0]
    y = pts[:, 1] if pts.shape[1] > 1 else np.zeros(len(pts))
    span_x = (x.max() - x.min()) or 1.0
    span_y = (y.max() - y.min()) or 1.0
    plot = size - 2 * margin
    sx = margin + (x - x.min()) / span_x * plot
    sy = size - margin - (y - y.min()) / span_y * plot
    classes = sorted(set(int(l) for l in labels))
    color = {c: (OUTLIER_COLOR if c < 0 else PALETTE[c % len(PALETTE)]) for c in classes}
    width = size + 110
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{size}" viewBox="0 0 {width} {size}">',
        f'<rect width="{width}" height="{size}" fill="white"/>',
        f'<text x="{margin}" y="{margin // 2 + 5}" font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{margin}" y="{margin}" width="{plot}" height="{plot}" fill="none" stroke="#999"/>',
    ]
    for px, py, lab in zip(sx, sy, labels):
        out.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2" fill="{color[int(lab)]}" fill-opacity="0.7"/>')
    for i, c in enumerate(classes):
        ly = margin + 16 * i + 8
        name = "outlier" if c < 0 else f"class {c}"
        out.append(f'<circle cx="{size + 10}" cy="{ly}" r="4" fill="{color[c]}"/>')
        out.append(f'<text x="{size + 20}" y="{ly + 4}" font-family="sans-serif" font-size="11">{name}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def _fmt(v, spec=".4f"):
    if v is None:
        return "n/a"
    if isinstance(v, float) and (abs(v) < 1e-3 and v != 0):
        return f"{v:.2e}"
    return format(v, spec) if isinstance(v, float) else str(v)


def render_tables(report: dict) -> str:
    """Plain-text summary mirroring the variance, greediness and downstream tables."""
    losses = report.get("losses", {})
    lines = ["Variance structure (held-out embeddings)",
             f"{'loss':<12} {'intra mu':>10} {'intra s2':>10} {'inter mu':>10} {'inter s2':>10} {'inter sq':>10}"]
    for name, r in losses.items():
        v = r["variance"]
        lines.append(f"{name:<12} {_fmt(v['intra_mean']):>10} {_fmt(v['intra_var']):>10} "
                     f"{_fmt(v['inter_mean_dist']):>10} {_fmt(v['inter_var']):>10} {_fmt(v['inter_mean_sq']):>10}")
    cmp = report.get("comparison", {})
    tt = cmp.get("t_test")
    if tt:
        lines.append(f"paired t-test on per-class intra variance: t={_fmt(tt['t'])}, p={_fmt(tt['p'])}")
    if "intra_ratio" in cmp:
        lines.append(f"intra ratio triplet/contrastive: {_fmt(cmp['intra_ratio'], '.3f')}")

    lines += ["", "Greediness",
              f"{'loss':<12} {'active':>8} {'grad norm':>10} {'decay ep':>9}"]
    for name, r in losses.items():
        g = r["greediness"]
        lines.append(f"{name:<12} {g['mean_active_ratio']:>8.1%} {_fmt(g['mean_grad_norm']):>10} "
                     f"{_fmt(g['decay_epoch']):>9}")

    lines += ["", "Downstream"]
    ks = None
    for name, r in losses.items():
        rec = r["recall"]["recall_at"]
        ks = ks or list(rec)
        cells = " ".join(f"r@{k}={rec[k]:.4f}" for k in ks)
        lines.append(f"{name:<12} knn acc={r['knn_accuracy']:.4f}  {cells}")
    return "\n".join(lines) + "\n"
