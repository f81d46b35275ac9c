"""Heatmap targets, peak decoding and responsiveness.

A joint becomes a Gaussian bump on a coarse grid. Decoding takes the argmax
and nudges it a quarter cell toward the stronger neighbour. The peak height
(responsiveness) is what the masking policy later reads as confidence.
"""
import numpy as np

from adaptmask import KeypointSet, Visibility, decode_peaks, responsiveness, synthesize_targets

kps = KeypointSet([[128, 128], [40.5, 77.0], [10, 10]],
                  [Visibility.VISIBLE, Visibility.INVISIBLE, Visibility.NOT_LABELED])
stack = synthesize_targets(kps, sigma=2.0, out_size=(64, 48), stride=4)
print("maps:", stack.maps.shape)
print("responsiveness per joint:", responsiveness(stack))   # unlabeled joint gives 0

dec = decode_peaks(stack, stride=4)  # the all-zero map of the unlabeled joint decodes to the origin
for j, (gt, got) in enumerate(zip(kps.coords, dec.coords)):
    print(f"joint {j}: gt {gt}  decoded {got}  error {np.abs(gt - got).max():.2f}px")

# a blurry, low prediction keeps its peak location but reports low confidence
soft = stack.maps * 0.3
print("scaled-down responsiveness:", responsiveness(soft))
