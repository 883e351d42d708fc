"""Figure rendering for the report paths (sweep curves, convergence traces)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_VARIABLE_LABELS = {
    "input_size_bits": "input data size (bits)",
    "complexity_cycles_per_bit": "computational complexity (cycles/bit)",
}


def render_sweep_figure(rows, path: Path, variable: str = "") -> Path:
    """Latency versus swept value, one line per strategy (mean over seeds)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    series: dict[str, dict[float, list[float]]] = {}
    for r in rows:
        if not r.feasible or not math.isfinite(r.latency_s):
            continue
        series.setdefault(r.strategy, {}).setdefault(r.swept_value, []).append(r.latency_s)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for strategy in sorted(series):
        pts = sorted(series[strategy].items())
        xs = [x for x, _ in pts]
        ys = [sum(v) / len(v) for _, v in pts]
        ax.plot(xs, ys, marker="o", markersize=4, label=strategy)
    ax.set_xlabel(_VARIABLE_LABELS.get(variable, variable or "swept value"))
    ax.set_ylabel("task latency (s)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_convergence_figure(trace, path: Path) -> Path:
    """Best fitness per generation for one solver run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    finite = [(g, v) for g, v in enumerate(trace) if math.isfinite(v)]
    if finite:
        ax.plot([g for g, _ in finite], [v for _, v in finite], lw=1.5)
    ax.set_xlabel("generation")
    ax.set_ylabel("best latency (s)")
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
