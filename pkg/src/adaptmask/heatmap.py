"""Heatmap representation: Gaussian targets, peak decoding and responsiveness.

Coordinates follow the (x, y) = (column, row) convention. Image coordinates map
to heatmap coordinates by plain division by the stride, so a joint at image
pixel 128 with stride 4 lands on heatmap cell 32.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

TRUNCATE_BELOW = 1e-4
TRUNCATE_SIGMAS = 3.0


class Visibility(IntEnum):
    """COCO-style visibility flags."""

    NOT_LABELED = 0
    INVISIBLE = 1
    VISIBLE = 2


@dataclass
class KeypointSet:
    """K joint coordinates (image pixels) plus visibility flags."""

    coords: np.ndarray
    visibility: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        self.visibility = np.asarray(self.visibility, dtype=np.int64).reshape(-1)
        if len(self.coords) != len(self.visibility):
            raise ValueError(
                f"coords has {len(self.coords)} joints but visibility has {len(self.visibility)}")
        if np.any((self.visibility < 0) | (self.visibility > 2)):
            raise ValueError("visibility flags must be 0, 1 or 2")

    @property
    def K(self) -> int:
        return len(self.visibility)

    @property
    def labeled(self) -> np.ndarray:
        return self.visibility > Visibility.NOT_LABELED

    @classmethod
    def all_visible(cls, coords) -> "KeypointSet":
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        return cls(coords, np.full(len(coords), Visibility.VISIBLE))

    def copy(self) -> "KeypointSet":
        return KeypointSet(self.coords.copy(), self.visibility.copy())


@dataclass
class Heatmap:
    values: np.ndarray
    joint_id: int

    @property
    def responsiveness(self) -> float:
        return float(np.max(self.values))


@dataclass
class HeatmapStack:
    """One heatmap per joint, all sharing a (height, width)."""

    maps: np.ndarray
    sample_id: Optional[object] = field(default=None)

    def __post_init__(self):
        self.maps = np.asarray(self.maps)
        if self.maps.ndim != 3:
            raise ValueError(f"expected (K, H, W) maps, got shape {self.maps.shape}")
        if self.maps.shape[0] == 0:
            raise ValueError("a heatmap stack needs at least one joint")

    @property
    def K(self) -> int:
        return self.maps.shape[0]

    @property
    def size(self) -> Tuple[int, int]:
        return self.maps.shape[1], self.maps.shape[2]

    def __len__(self) -> int:
        return self.K

    def __getitem__(self, joint_id: int) -> Heatmap:
        return Heatmap(self.maps[joint_id], joint_id)

    def __iter__(self) -> Iterator[Heatmap]:
        return (self[j] for j in range(self.K))


def _check_params(sigma, stride, out_size):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not stride > 0:
        raise ValueError(f"stride must be positive, got {stride}")
    h, w = out_size
    if h < 1 or w < 1:
        raise ValueError(f"out_size must be at least 1x1, got {out_size}")


def gaussian_targets(coords: np.ndarray, labeled: np.ndarray, sigma: float,
                     out_size: Tuple[int, int], stride: float) -> np.ndarray:
    """Batched target synthesis.

    ``coords`` has shape (..., K, 2) in image pixels and ``labeled`` shape
    (..., K). Returns float32 maps of shape (..., K, H, W).
    """
    _check_params(sigma, stride, out_size)
    h, w = out_size
    coords = np.asarray(coords, dtype=np.float64)
    labeled = np.asarray(labeled, dtype=bool)
    centers = np.floor(coords / stride + 0.5)
    # points inside the covered extent but past the last cell centre snap to the edge cell
    limit = np.array([w - 1, h - 1], dtype=np.float64)
    covered = (coords >= 0) & (coords <= np.array([w, h]) * stride)
    centers = np.where(covered, np.minimum(centers, limit), centers)
    cx = centers[..., 0, None, None]
    cy = centers[..., 1, None, None]
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)[:, None]
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    maps = np.exp(-d2 / (2.0 * sigma ** 2))
    maps[d2 > (TRUNCATE_SIGMAS * sigma) ** 2] = 0.0
    maps[maps < TRUNCATE_BELOW] = 0.0
    maps = maps * labeled[..., None, None]
    return maps.astype(np.float32)


def synthesize_targets(keypoints: KeypointSet, sigma: float = 2.0,
                       out_size: Tuple[int, int] = (64, 48), stride: float = 4.0,
                       sample_id=None) -> HeatmapStack:
    """Unnormalized Gaussian per labeled joint with peak 1.0 at the nearest cell."""
    maps = gaussian_targets(keypoints.coords, keypoints.labeled, sigma, out_size, stride)
    return HeatmapStack(maps, sample_id)


def responsiveness(stack) -> np.ndarray:
    """Per-joint maximum activation. Accepts a HeatmapStack or an array (..., K, H, W)."""
    maps = stack.maps if isinstance(stack, HeatmapStack) else np.asarray(stack)
    if maps.size == 0:
        raise ValueError("empty heatmap stack")
    return maps.reshape(*maps.shape[:-2], -1).max(axis=-1)


def decode_maps(maps: np.ndarray, stride: float) -> Tuple[np.ndarray, np.ndarray]:
    """Batched peak decoding.

    Returns ``(coords, scores)`` with coords (..., K, 2) in image pixels and
    scores (..., K) the peak values. Ties resolve to the lowest row-major index;
    the peak is shifted a quarter cell toward the larger neighbour on each axis.
    """
    maps = np.asarray(maps, dtype=np.float64)
    lead = maps.shape[:-2]
    h, w = maps.shape[-2:]
    flat = maps.reshape(-1, h * w)
    idx = np.argmax(flat, axis=1)
    scores = flat[np.arange(len(flat)), idx]
    py, px = np.divmod(idx, w)
    planes = maps.reshape(-1, h, w)
    n = np.arange(len(flat))
    x = px.astype(np.float64)
    y = py.astype(np.float64)

    inner_x = (px > 0) & (px < w - 1)
    dx = np.zeros_like(x)
    dx[inner_x] = (planes[n[inner_x], py[inner_x], px[inner_x] + 1]
                   - planes[n[inner_x], py[inner_x], px[inner_x] - 1])
    inner_y = (py > 0) & (py < h - 1)
    dy = np.zeros_like(y)
    dy[inner_y] = (planes[n[inner_y], py[inner_y] + 1, px[inner_y]]
                   - planes[n[inner_y], py[inner_y] - 1, px[inner_y]])
    x += 0.25 * np.sign(dx)
    y += 0.25 * np.sign(dy)

    coords = np.stack([x, y], axis=-1) * stride
    return coords.reshape(*lead, 2), scores.reshape(lead)


def decode_peaks(stack: HeatmapStack, stride: float = 4.0) -> KeypointSet:
    coords, _ = decode_maps(stack.maps, stride)
    return KeypointSet.all_visible(coords)


def stack_from_arrays(maps: Sequence[np.ndarray], sample_id=None) -> HeatmapStack:
    return HeatmapStack(np.stack([np.asarray(m) for m in maps]), sample_id)
