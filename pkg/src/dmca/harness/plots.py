"""Best-effort PNG rendering of the harness CSVs (needs matplotlib)."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np


def _rows(path: Path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_compare(out: str | Path) -> list[Path]:
    """Bar chart of κ and S_ta per cell plus the throughput traces."""
    out = Path(out)
    plt = _pyplot()
    rows = _rows(out / "metrics.csv")
    labels = [f"{r['method']}\n{r['mode']} lag{r['lag']}" for r in rows]
    x = np.arange(len(rows))
    fig, axes = plt.subplots(2, 1, figsize=(12, 7), sharex=True)
    for ax, key, name in ((axes[0], "kappa", "service arrival rate"), (axes[1], "S_ta_norm", "normalised stability")):
        ax.bar(x, [float(r[key]) for r in rows])
        ax.set_ylabel(name)
    axes[1].set_xticks(x, labels, rotation=60, fontsize=7)
    fig.tight_layout()
    files = [out / "metrics.png"]
    fig.savefig(files[0], dpi=120)
    plt.close(fig)

    series = _rows(out / "throughput.csv")
    if series:
        fig, ax = plt.subplots(figsize=(10, 4))
        for name in series[0]:
            if name != "slot":
                ax.plot([float(s[name]) for s in series], label=name, lw=0.8)
        ax.set_xlabel("slot")
        ax.set_ylabel("throughput (bits/s)")
        ax.legend(fontsize=6, ncol=3)
        fig.tight_layout()
        files.append(out / "throughput.png")
        fig.savefig(files[-1], dpi=120)
        plt.close(fig)
    return files


def plot_convergence(out: str | Path) -> list[Path]:
    """Median steps-per-episode curves, one panel per Doppler value."""
    out = Path(out)
    plt = _pyplot()
    curves = defaultdict(lambda: defaultdict(list))
    for r in _rows(out / "convergence_steps.csv"):
        key = (float(r["lr"]), int(r["prediction"]))
        curves[float(r["doppler"])][key].append((int(r["seed"]), int(r["episode"]), float(r["steps_median10"])))
    fig, axes = plt.subplots(1, max(len(curves), 1), figsize=(6 * max(len(curves), 1), 4), squeeze=False)
    for ax, (fd, cells) in zip(axes[0], sorted(curves.items())):
        for (lr, pred), pts in sorted(cells.items()):
            by_ep = defaultdict(list)
            for _, ep, v in pts:
                by_ep[ep].append(v)
            eps = sorted(by_ep)
            style = "-" if pred else "--"
            ax.plot(eps, [np.median(by_ep[e]) for e in eps], style, label=f"lr={lr:g} pred={pred}")
        ax.set_title(f"doppler {fd:g}")
        ax.set_xlabel("episode")
        ax.set_ylabel("steps (median of 10)")
        ax.set_yscale("log")
        ax.legend(fontsize=7)
    fig.tight_layout()
    path = out / "convergence.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]
