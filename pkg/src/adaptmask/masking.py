"""Adaptive keypoint masking.

A sample's difficulty is read off the teacher heatmaps: joints whose peak is
close to the sample's best peak count as simple, and the mask budget scales
with the fraction of simple joints. Samples whose best peak is itself weak are
treated as extreme and receive the floor budget.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .heatmap import KeypointSet, Visibility


@dataclass
class MaskPolicy:
    gamma: float = 0.5
    m: int = 8
    floor: int = 2
    tau_min: float = 0.3
    size_range: Tuple[int, int] = (8, 24)

    def __post_init__(self):
        self.size_range = tuple(int(s) for s in self.size_range)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if not 0 <= self.floor <= self.m:
            raise ValueError(f"floor must lie in [0, m], got {self.floor}")
        if not 0.0 < self.tau_min < 1.0:
            raise ValueError(f"tau_min must lie in (0, 1), got {self.tau_min}")
        lo, hi = self.size_range
        if lo < 1 or lo > hi:
            raise ValueError(f"invalid size_range {self.size_range}")


@dataclass
class MaskBudget:
    count: int
    n_simple: int
    relative_response: np.ndarray = field(repr=False)
    extreme: bool = False

    def to_json(self, sample_id=None) -> dict:
        return {
            "sample_id": sample_id,
            "n_simple": int(self.n_simple),
            "count": int(self.count),
            "extreme": bool(self.extreme),
            "relative_response": [float(r) for r in self.relative_response],
        }


def relative_response(resp: Sequence[float]) -> np.ndarray:
    """Distance of each joint's responsiveness from the sample's best, scaled to [0, 1].

    A flat profile (best == worst) maps to all zeros.
    """
    resp = np.asarray(resp, dtype=np.float64).reshape(-1)
    if len(resp) < 2:
        raise ValueError(f"need at least two joints, got {len(resp)}")
    hi = resp.max()
    lo = resp.min()
    if hi == lo:
        return np.zeros_like(resp)
    return (hi - resp) / (hi - lo)


def scaled_count(n: int, m: int, K: int) -> int:
    """round(n * m / K), halves rounded away from zero, in exact integer arithmetic."""
    return (2 * n * m + K) // (2 * K)


def allocate_mask_count(resp: Sequence[float], policy: MaskPolicy) -> MaskBudget:
    resp = np.asarray(resp, dtype=np.float64).reshape(-1)
    rel = relative_response(resp)
    n = int(np.count_nonzero(rel < policy.gamma))
    if resp.max() < policy.tau_min:
        return MaskBudget(policy.floor, n, rel, extreme=True)
    return MaskBudget(scaled_count(n, policy.m, len(resp)), n, rel, extreme=False)


def random_mask_budget(K: int, policy: MaskPolicy, rng: np.random.Generator) -> MaskBudget:
    """Responsiveness-blind budget: a count drawn uniformly from [0, m]."""
    count = int(rng.integers(0, policy.m + 1))
    return MaskBudget(count, 0, np.zeros(K), extreme=False)


def _square(cx: float, cy: float, side: int, h: int, w: int):
    x0 = int(np.floor(cx - side / 2.0 + 0.5))
    y0 = int(np.floor(cy - side / 2.0 + 0.5))
    return max(y0, 0), min(y0 + side, h), max(x0, 0), min(x0 + side, w)


def apply_keypoint_masks(image: np.ndarray, decoded: KeypointSet, budget: MaskBudget,
                         policy: MaskPolicy, rng: np.random.Generator,
                         return_boxes: bool = False):
    """Occlude ``budget.count`` randomly chosen joints with mean-filled squares.

    ``image`` is channel-first (C, H, W). Only visible joints inside the image
    are candidates; if fewer than ``budget.count`` exist, all of them are
    masked. The input is never modified.

    Returns ``(masked_image, joint_ids)`` and, with ``return_boxes``, the list of
    clipped ``(y0, y1, x0, x1)`` squares as a third element.
    """
    image = np.asarray(image)
    out = image.copy()
    c, h, w = image.shape
    coords = decoded.coords
    inside = ((decoded.visibility == Visibility.VISIBLE)
              & (coords[:, 0] >= 0) & (coords[:, 0] <= w - 1)
              & (coords[:, 1] >= 0) & (coords[:, 1] <= h - 1))
    candidates = np.flatnonzero(inside)
    count = min(int(budget.count), len(candidates))
    boxes: List[Tuple[int, int, int, int]] = []
    if count == 0:
        return (out, [], boxes) if return_boxes else (out, [])

    chosen = rng.choice(candidates, size=count, replace=False)
    lo, hi = policy.size_range
    sides = rng.integers(lo, hi + 1, size=count)
    fill = image.reshape(c, -1).mean(axis=1)
    for j, side in zip(chosen, sides):
        y0, y1, x0, x1 = _square(coords[j, 0], coords[j, 1], int(side), h, w)
        out[:, y0:y1, x0:x1] = fill[:, None, None]
        boxes.append((y0, y1, x0, x1))
    ids = [int(j) for j in chosen]
    return (out, ids, boxes) if return_boxes else (out, ids)
