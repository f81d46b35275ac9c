"""Loss, AP and mask-count charts from run directories."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .train import read_metrics  # noqa: E402

log = logging.getLogger(__name__)


def _label(run_dir: Path) -> str:
    cfg = run_dir / "config.json"
    if cfg.exists():
        flat = json.loads(cfg.read_text(encoding="utf-8"))["flat"]
        return f"{flat['train.method']} (seed {flat['train.seed']})"
    return run_dir.name


def _series(rows, key):
    pts = [(r["epoch"], r[key]) for r in rows if r.get(key) is not None]
    return [p[0] for p in pts], [p[1] for p in pts]


def _line_chart(runs, panels, path):
    """One panel per (column, axis label); every run is a line on every panel."""
    fig, axes = plt.subplots(1, len(panels), figsize=(6 * len(panels), 4), squeeze=False)
    for ax, (key, ylabel) in zip(axes[0], panels):
        for label, rows in runs:
            x, y = _series(rows, key)
            ax.plot(x, y, marker="o", markersize=3, label=label)
        ax.set_xlabel("epoch")
        ax.set_ylabel(ylabel)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _mask_histogram(run_dir: Path, label: str, path: Path) -> bool:
    diag = run_dir / "diagnostics.jsonl"
    if not diag.exists():
        return False
    rows = [json.loads(ln) for ln in diag.read_text(encoding="utf-8").splitlines() if ln]
    rows = [r for r in rows if r.get("mask_count_hist")]
    if not rows:
        return False
    width = max(len(r["mask_count_hist"]) for r in rows)
    grid = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        h = np.asarray(r["mask_count_hist"], dtype=np.float64)
        grid[i, :len(h)] = h / max(h.sum(), 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(grid.T, origin="lower", aspect="auto", cmap="viridis",
                   extent=(rows[0]["epoch"] - 0.5, rows[-1]["epoch"] + 0.5, -0.5, width - 0.5))
    fig.colorbar(im, ax=ax, label="fraction of samples")
    ax.set_xlabel("epoch")
    ax.set_ylabel("masks per sample")
    ax.set_title(label, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return True


def emit_plots(run_dirs: Sequence, out_dir) -> List[Path]:
    """Write ``loss.png`` and ``ap.png`` (with a PCK panel when available) overlaying every
    run, plus one mask-count histogram per run that recorded mask counts.

    Runs whose metrics.csv is missing or empty are skipped with a warning.
    """
    out = Path(out_dir)
    runs = []
    dirs = []
    for d in map(Path, run_dirs):
        rows = read_metrics(d) if (d / "metrics.csv").exists() else []
        if not rows:
            log.warning("%s: metrics.csv is missing or empty, nothing to plot", d)
            continue
        runs.append((_label(d), rows))
        dirs.append(d)
    if not runs:
        return []
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "loss.png", out / "ap.png"]
    _line_chart(runs, [("l_total", "training loss")], written[0])
    panels = [("ap", "AP")]
    if any(r.get("pck_total") is not None for _, rows in runs for r in rows):
        panels.append(("pck_total", "PCK@0.5"))
    _line_chart(runs, panels, written[1])
    for i, (d, (label, _)) in enumerate(zip(dirs, runs)):
        path = out / f"mask-hist-{i}-{d.name}.png"
        if _mask_histogram(d, label, path):
            written.append(path)
    return written
