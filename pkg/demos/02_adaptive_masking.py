"""Adaptive keypoint masking on a synthetic figure.

The teacher's per-joint responsiveness decides how many joints get occluded.
Confident samples get more masks (harder student task). Samples whose best
joint is still weak count as extreme and only get the floor amount.
"""
from pathlib import Path

import numpy as np
from PIL import Image

from adaptmask import (MaskPolicy, allocate_mask_count, apply_keypoint_masks,
                       generate_stick_figures, relative_response)
from adaptmask.data import denormalize

policy = MaskPolicy(gamma=0.5, m=8, floor=2, tau_min=0.3, size_range=(4, 10))
rng = np.random.default_rng(0)

profiles = {
    "confident": np.full(16, 0.9),
    "mixed": np.r_[np.full(8, 0.9), np.full(8, 0.2)],
    "one strong joint": np.r_[0.9, np.full(15, 0.35)],
    "extreme": np.linspace(0.05, 0.2, 16),
}
for name, resp in profiles.items():
    b = allocate_mask_count(resp, policy)
    print(f"{name:>16}: simple joints {b.n_simple:2d} -> {b.count} masks (extreme={b.extreme})")

print("relative response of the mixed profile:", relative_response(profiles["mixed"])[[0, -1]])

rec = generate_stick_figures(1, seed=4)[0]
image = np.transpose(rec.image, (2, 0, 1))
budget = allocate_mask_count(profiles["mixed"], policy)
masked, ids, boxes = apply_keypoint_masks(image, rec.keypoints, budget, policy, rng, return_boxes=True)
print("masked joints:", ids, "boxes (y0, y1, x0, x1):", boxes)

out = Path("demo-output")
out.mkdir(exist_ok=True)
pair = np.concatenate([denormalize(rec.image), denormalize(np.transpose(masked, (1, 2, 0)))], axis=1)
Image.fromarray(pair).resize((256, 128), Image.NEAREST).save(out / "masking.png")
print("wrote", out / "masking.png")
