"""Affine augmentation and frame alignment between teacher and student views.

All transforms are 2x3 matrices acting on (x, y) pixel coordinates of the
frame they are expressed in. ``heatmap_matrix`` re-expresses an image-frame
transform in heatmap cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from .heatmap import HeatmapStack, KeypointSet, Visibility


@dataclass
class AugConfig:
    weak_rotation_max: float = 15.0
    weak_scale_range: Tuple[float, float] = (0.9, 1.1)
    strong_rotation_max: float = 45.0
    strong_scale_range: Tuple[float, float] = (0.7, 1.3)
    strong_translate_frac: float = 0.1


@dataclass
class AffineAug:
    """Rotation (degrees) and scale about ``center``, followed by a translation."""

    rotation: float = 0.0
    scale: float = 1.0
    translation: Tuple[float, float] = (0.0, 0.0)
    center: Tuple[float, float] = (0.0, 0.0)

    @property
    def matrix(self) -> np.ndarray:
        if self.scale == 0:
            raise ValueError("scale must be non-zero")
        th = math.radians(self.rotation)
        c, s = math.cos(th) * self.scale, math.sin(th) * self.scale
        lin = np.array([[c, -s], [s, c]])
        cen = np.asarray(self.center, dtype=np.float64)
        t = cen + np.asarray(self.translation, dtype=np.float64) - lin @ cen
        return np.hstack([lin, t[:, None]])


Transform = Union[AffineAug, np.ndarray]


def as_matrix(t: Transform) -> np.ndarray:
    if isinstance(t, AffineAug):
        return t.matrix
    m = np.asarray(t, dtype=np.float64)
    if m.shape == (3, 3):
        m = m[:2]
    if m.shape[-2:] != (2, 3):
        raise ValueError(f"expected a 2x3 affine matrix, got shape {m.shape}")
    return m


def _homog(m: np.ndarray) -> np.ndarray:
    out = np.zeros(m.shape[:-2] + (3, 3))
    out[..., :2, :] = m
    out[..., 2, 2] = 1.0
    return out


def compose(b: Transform, a: Transform) -> np.ndarray:
    """The transform applying ``a`` first, then ``b``."""
    return (_homog(as_matrix(b)) @ _homog(as_matrix(a)))[..., :2, :]


def invert(a: Transform) -> np.ndarray:
    m = as_matrix(a)
    det = np.linalg.det(m[..., :2])
    if np.any(np.abs(det) < 1e-12):
        raise ValueError("affine transform is not invertible")
    return np.linalg.inv(_homog(m))[..., :2, :]


def identity() -> np.ndarray:
    return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def transform_points(a: Transform, pts: np.ndarray) -> np.ndarray:
    """Apply ``a`` to points of shape (..., 2); batched matrices broadcast over the point axis."""
    m = as_matrix(a)
    pts = np.asarray(pts, dtype=np.float64)
    if m.ndim == 2:
        return pts @ m[:, :2].T + m[:, 2]
    return np.einsum("nij,nkj->nki", m[:, :, :2], pts) + m[:, None, :, 2]


def transform_keypoints(a: Transform, kps: KeypointSet,
                        image_size: Optional[Tuple[int, int]] = None) -> KeypointSet:
    """Move keypoints through ``a``; labeled joints leaving the frame become not-labeled."""
    coords = transform_points(a, kps.coords)
    vis = kps.visibility.copy()
    if image_size is not None:
        h, w = image_size
        out = ((coords[:, 0] < 0) | (coords[:, 0] > w - 1)
               | (coords[:, 1] < 0) | (coords[:, 1] > h - 1))
        vis[out] = Visibility.NOT_LABELED
    return KeypointSet(coords, vis)


def heatmap_matrix(a: Transform, stride: float) -> np.ndarray:
    """Express an image-frame transform in heatmap cells (coords divided by ``stride``)."""
    m = as_matrix(a).copy()
    m[..., 2] = m[..., 2] / stride
    return m


def relative_transform(student: Transform, teacher: Transform) -> np.ndarray:
    """Map from the teacher's view into the student's view: student o teacher^-1."""
    return compose(student, invert(teacher))


def _sample(rng: np.random.Generator, rot_max, scale_range, translate, image_size):
    h, w = image_size
    rot = float(rng.uniform(-rot_max, rot_max))
    scale = float(rng.uniform(*scale_range))
    if translate > 0:
        dx = float(rng.uniform(-translate * w, translate * w))
        dy = float(rng.uniform(-translate * h, translate * h))
    else:
        dx = dy = 0.0
    return AffineAug(rot, scale, (dx, dy), ((w - 1) / 2.0, (h - 1) / 2.0))


def sample_weak(rng: np.random.Generator, image_size: Tuple[int, int] = (64, 64),
                cfg: Optional[AugConfig] = None) -> AffineAug:
    cfg = cfg or AugConfig()
    return _sample(rng, cfg.weak_rotation_max, cfg.weak_scale_range, 0.0, image_size)


def sample_strong(rng: np.random.Generator, image_size: Tuple[int, int] = (64, 64),
                  cfg: Optional[AugConfig] = None) -> AffineAug:
    cfg = cfg or AugConfig()
    return _sample(rng, cfg.strong_rotation_max, cfg.strong_scale_range,
                   cfg.strong_translate_frac, image_size)


def _grid(inv: torch.Tensor, h: int, w: int, h_in: int, w_in: int) -> torch.Tensor:
    # Output pixel centres -> source pixel coords -> grid_sample's normalized space.
    dtype = inv.dtype
    ys, xs = torch.meshgrid(torch.arange(h, dtype=dtype), torch.arange(w, dtype=dtype),
                            indexing="ij")
    pts = torch.stack([xs, ys, torch.ones_like(xs)], dim=-1).reshape(-1, 3)
    src = torch.einsum("nij,pj->npi", inv, pts)
    gx = (2.0 * src[..., 0] + 1.0) / w_in - 1.0
    gy = (2.0 * src[..., 1] + 1.0) / h_in - 1.0
    return torch.stack([gx, gy], dim=-1).reshape(-1, h, w, 2)


def warp_batch(x: torch.Tensor, mats: np.ndarray,
               out_size: Optional[Tuple[int, int]] = None) -> torch.Tensor:
    """Bilinear warp of (N, C, H, W) by per-sample 2x3 matrices; zeros outside the source."""
    n, _, h_in, w_in = x.shape
    h, w = out_size or (h_in, w_in)
    mats = np.broadcast_to(as_matrix(mats), (n, 2, 3))
    inv = torch.as_tensor(invert(mats), dtype=x.dtype)
    grid = _grid(inv, h, w, h_in, w_in)
    out = F.grid_sample(x, grid, mode="bilinear", padding_mode="zeros", align_corners=False)
    is_id = np.all(mats == identity(), axis=(1, 2))
    if is_id.any() and (h, w) == (h_in, w_in):
        keep = torch.as_tensor(is_id)
        out[keep] = x[keep]
    return out


def _warp_array(arr: np.ndarray, m: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if np.array_equal(m, identity()):
        return arr.copy()
    squeeze = arr.ndim == 2
    planes = arr[None] if squeeze else arr
    t = torch.as_tensor(np.ascontiguousarray(planes, dtype=np.float64))[None]
    out = warp_batch(t, m)[0].numpy().astype(arr.dtype, copy=False)
    return out[0] if squeeze else out


def warp_image(image: np.ndarray, aug: Transform) -> np.ndarray:
    """Warp a channel-first (C, H, W) or single-plane (H, W) image."""
    return _warp_array(image, as_matrix(aug))


def warp_heatmaps(stack: HeatmapStack, rel: Transform) -> HeatmapStack:
    """Warp every joint map by ``rel``, which must be expressed in heatmap cells."""
    return HeatmapStack(_warp_array(stack.maps, as_matrix(rel)), stack.sample_id)
