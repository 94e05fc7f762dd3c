"""Delimited reports and the figures rendered next to them."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def _fmt(x) -> str:
    return repr(x) if isinstance(x, float) else str(x)


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """Atomic CSV write; floats keep full round-trip precision."""
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(x) for x in row) for row in rows)
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def write_metric_report(path: str | os.PathLike, rows: Sequence[tuple[str, str, float]]) -> None:
    write_csv(path, ("metric", "subset", "value"), rows)


def write_retrieval_report(path: str | os.PathLike, rows: Sequence[tuple[int, str, float]]) -> None:
    write_csv(path, ("layer", "direction", "accuracy"), rows)


def plot_training_curves(rows: Sequence[tuple], path: str | os.PathLike) -> None:
    """Loss curves from pretraining metric rows (step, lr, total, sc, x, gnorm)."""
    steps = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, [r[2] for r in rows], label="total", lw=1.2)
    ax.plot(steps, [r[3] for r in rows], label="span corruption", lw=0.8, alpha=0.8)
    if any(r[4] for r in rows):
        ax.plot(steps, [r[4] for r in rows], label="cross-lingual", lw=0.8, alpha=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_retrieval_by_layer(rows: Sequence[tuple[int, str, float]], path: str | os.PathLike) -> None:
    """accuracy@1 per encoder layer, one line per direction."""
    directions = sorted({r[1] for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for d in directions:
        pts = sorted((layer, acc) for layer, dd, acc in rows if dd == d)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=d)
    ax.set_xlabel("encoder layer")
    ax.set_ylabel("retrieval accuracy@1")
    ax.set_ylim(0, 1)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_noise_sweep(rows: Sequence[dict], path: str | os.PathLike) -> None:
    """Per-density summary curves from the noise sweep."""
    rows = sorted(rows, key=lambda r: r["density"])
    dens = [r["density"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.plot(dens, [r["final_loss_x"] for r in rows], marker="o")
    ax1.set_xlabel("noise density")
    ax1.set_ylabel("final cross-task loss")
    ax2.plot(dens, [r["retrieval_mean"] for r in rows], marker="o", color="tab:green")
    ax2.set_xlabel("noise density")
    ax2.set_ylabel("retrieval accuracy@1 (last layer)")
    ax2.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
