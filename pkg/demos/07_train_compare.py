"""Short supervised vs. adaptive vs. adaptive+mixup comparison, then plots.

Five epochs on a small split keeps this to a couple of minutes on a laptop CPU.
The acceptance suite runs the full 30-epoch, 3-seed version.
"""
import logging
from pathlib import Path

from adaptmask import emit_plots, fit, from_flat, make_synthetic_dataset, read_metrics

logging.basicConfig(level=logging.INFO, format="%(message)s")
data = make_synthetic_dataset(200, 80, seed=0)
root = Path("demo-output") / "runs"
dirs = []
for method in ("supervised", "adaptive", "adaptive+mixup"):
    cfg = from_flat({"train.method": method, "train.epochs": 5, "data.labels": 40,
                     "train.lr_drops": [[4, 1e-4]]})
    run = fit(cfg, root / method.replace("+", "-"), datasets=data)
    dirs.append(run)
    last = read_metrics(run)[-1]
    print(f"{method:>15}: PCK {last['pck_total']:.3f}  teacher responsiveness {last['mean_responsiveness']:.3f}")

for path in emit_plots(dirs, root / "plots"):
    print("wrote", path)
