"""OKS, AP/AR and PCKh on hand-made predictions."""
import math

import numpy as np

from adaptmask import KeypointSet, OksParams, PckParams, average_precision, oks, pck

gt = KeypointSet.all_visible([[10, 10], [20, 10], [15, 30]])
area, sigmas = 400.0, np.array([0.05, 0.05, 0.1])
for shift in (0.0, 1.0, 2.0, 4.0):
    pred = KeypointSet.all_visible(gt.coords + [shift, 0])
    print(f"shift {shift}px -> OKS {oks(pred, gt, OksParams(sigmas, area)):.4f}")
print("one sigma of displacement gives exp(-1/2) =", round(math.exp(-0.5), 4))

print("all OKS at 0.6:", average_precision([(0.9, 0.6), (0.5, 0.6), (0.3, 0.6)]))
print("mixed:", average_precision([(0.9, 0.97), (0.7, 0.4), (0.6, 0.8), (0.2, 0.55)]))

rng = np.random.default_rng(0)
truth = [KeypointSet.all_visible(rng.uniform(0, 60, (16, 2))) for _ in range(20)]
guess = [KeypointSet.all_visible(t.coords + rng.normal(0, 3, (16, 2))) for t in truth]
head = [((0, 0), (6, 8))] * 20  # head diameter 10px, so the cut-off is 5px
for group, rate in pck(guess, truth, PckParams(0.5), head_rects=head).items():
    print(f"PCKh@0.5 {group:>8}: {100 * rate:5.1f}")
