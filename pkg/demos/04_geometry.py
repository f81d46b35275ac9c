"""Weak and strong views, and how teacher heatmaps are moved into the student frame.

The teacher sees a weak view, the student a strong one, both taken from the same
raw crop. The relative transform student o teacher^-1, with its translation
divided by the stride, carries the teacher's maps onto the student grid.
"""
import numpy as np

from adaptmask import (HeatmapStack, KeypointSet, decode_peaks, relative_transform, sample_strong,
                       sample_weak, synthesize_targets, warp_heatmaps)
from adaptmask.geometry import heatmap_matrix, transform_points

rng = np.random.default_rng(3)
stride = 4
joints = np.array([[20.0, 30.0], [40.0, 24.0], [33.0, 50.0]])
weak, strong = sample_weak(rng), sample_strong(rng)
print("weak  :", weak)
print("strong:", strong)

in_teacher = transform_points(weak, joints)
in_student = transform_points(strong, joints)
teacher_maps = synthesize_targets(KeypointSet.all_visible(in_teacher), 1.5, (16, 16), stride)

rel = relative_transform(strong, weak)
moved = warp_heatmaps(teacher_maps, heatmap_matrix(rel, stride))
got = decode_peaks(moved, stride).coords
for want, have in zip(in_student, got):
    print(f"student-frame joint {want.round(1)}  decoded from warped teacher map {have}")
