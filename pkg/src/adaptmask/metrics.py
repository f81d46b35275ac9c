"""OKS-based AP/AR and PCK/PCKh for single-person (top-down) evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .heatmap import KeypointSet, Visibility

COCO_SIGMAS = np.array([.26, .25, .25, .35, .35, .79, .79, .72, .72, .62, .62,
                        1.07, 1.07, .87, .87, .89, .89]) / 10.0
OKS_THRESHOLDS = np.round(np.linspace(0.5, 0.95, 10), 2)
RECALL_POINTS = np.arange(101) / 100.0  # exact k/100, no linspace rounding

GROUP_NAMES = ("head", "shoulder", "elbow", "wrist", "hip", "knee", "ankle")
# MPII order: r_ank r_kne r_hip l_hip l_kne l_ank pelvis thorax neck head_top
#             r_wri r_elb r_sho l_sho l_elb l_wri
MPII_GROUPS = {"head": (8, 9), "shoulder": (12, 13), "elbow": (11, 14), "wrist": (10, 15),
               "hip": (2, 3), "knee": (1, 4), "ankle": (0, 5)}
COCO_GROUPS = {"head": (0, 1, 2, 3, 4), "shoulder": (5, 6), "elbow": (7, 8), "wrist": (9, 10),
               "hip": (11, 12), "knee": (13, 14), "ankle": (15, 16)}


class UndefinedMetricError(ValueError):
    pass


@dataclass
class OksParams:
    sigmas: np.ndarray
    area: float

    def __post_init__(self):
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)
        if np.any(self.sigmas <= 0):
            raise ValueError("OKS sigmas must be positive")
        if not self.area > 0:
            raise ValueError(f"object area must be positive, got {self.area}")


@dataclass
class PckParams:
    threshold: float = 0.5
    scale_source: str = "head-diameter"
    head_rect: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("PCK threshold must be positive")
        if self.scale_source not in ("head-diameter", "bbox-diagonal"):
            raise ValueError(f"unknown scale source {self.scale_source!r}")


def oks(pred: KeypointSet, gt: KeypointSet, params: OksParams, strict: bool = False) -> float:
    """Object keypoint similarity.

    By default every labeled gt joint (visible or occluded) contributes; with
    ``strict`` only visible joints do.
    """
    if pred.K != gt.K or len(params.sigmas) != gt.K:
        raise ValueError("joint counts of pred, gt and sigmas differ")
    used = gt.visibility == Visibility.VISIBLE if strict else gt.labeled
    if not used.any():
        raise UndefinedMetricError("no labeled ground-truth joints")
    d2 = np.sum((pred.coords - gt.coords) ** 2, axis=1)
    e = np.exp(-d2 / (2.0 * params.area * params.sigmas ** 2))
    return float(e[used].sum() / used.sum())


class APResult(NamedTuple):
    ap: float
    ap50: float
    ap75: float
    ar: float


def _ap_at(scores: np.ndarray, oks_vals: np.ndarray, t: float) -> Tuple[float, float]:
    order = np.argsort(-scores, kind="mergesort")
    tp = oks_vals[order] >= t
    tps = np.cumsum(tp)
    fps = np.cumsum(~tp)
    n = len(scores)
    recall = tps / n
    precision = tps / (tps + fps)
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.where(idx < n, precision[np.minimum(idx, n - 1)], 0.0)
    return float(q.mean()), float(recall[-1])


def average_precision(instances: Sequence[Tuple[float, float]],
                      thresholds: Sequence[float] = OKS_THRESHOLDS) -> APResult:
    """AP (101-point interpolated), AP50, AP75 and AR from (score, oks) pairs, one per gt."""
    if len(instances) == 0:
        raise UndefinedMetricError("no instances to evaluate")
    arr = np.asarray(instances, dtype=np.float64)
    scores, oks_vals = arr[:, 0], arr[:, 1]
    thresholds = np.asarray(thresholds, dtype=np.float64)
    per = [_ap_at(scores, oks_vals, t) for t in thresholds]
    aps = np.array([p[0] for p in per])
    recalls = np.array([p[1] for p in per])

    def at(t):
        hit = np.flatnonzero(np.isclose(thresholds, t))
        return float(aps[hit[0]]) if len(hit) else _ap_at(scores, oks_vals, t)[0]

    return APResult(float(aps.mean()), at(0.5), at(0.75), float(recalls.mean()))


def joint_groups(K: int) -> Dict[str, Tuple[int, ...]]:
    if K == 16:
        return MPII_GROUPS
    if K == 17:
        return COCO_GROUPS
    return {}


def _scale(params: PckParams, gt: KeypointSet, head_rect, bbox) -> float:
    if params.scale_source == "head-diameter":
        rect = head_rect if head_rect is not None else params.head_rect
        if rect is None:
            raise ValueError("head-diameter scaling needs a head rectangle")
        (x0, y0), (x1, y1) = rect
        return math.hypot(x1 - x0, y1 - y0)
    if bbox is None:
        pts = gt.coords[gt.labeled]
        x0, y0 = pts.min(axis=0)
        x1, y1 = pts.max(axis=0)
        return math.hypot(x1 - x0, y1 - y0)
    x, y, w, h = bbox
    return math.hypot(w, h)


def pck_correct(preds: Sequence[KeypointSet], gts: Sequence[KeypointSet], params: PckParams,
                head_rects=None, bboxes=None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-joint correctness (N, K) and the mask of joints that count (labeled gt)."""
    correct = []
    counted = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        rect = head_rects[i] if head_rects is not None else None
        box = bboxes[i] if bboxes is not None else None
        scale = _scale(params, g, rect, box)
        dist = np.linalg.norm(p.coords - g.coords, axis=1)
        correct.append(dist / scale < params.threshold)
        counted.append(g.labeled)
    return np.array(correct, dtype=bool), np.array(counted, dtype=bool)


def pck(preds: Sequence[KeypointSet], gts: Sequence[KeypointSet], params: PckParams,
        head_rects=None, bboxes=None) -> Dict[str, float]:
    """Per-group and total rates in [0, 1].

    A joint is correct iff its distance over the instance scale is strictly
    below the threshold. With a known joint layout the total covers the grouped
    joints only; otherwise it covers every labeled joint.
    """
    if len(preds) != len(gts):
        raise ValueError("preds and gts differ in length")
    if len(gts) == 0:
        raise UndefinedMetricError("no instances to evaluate")
    correct, counted = pck_correct(preds, gts, params, head_rects, bboxes)
    groups = joint_groups(gts[0].K)
    out: Dict[str, float] = {}
    use = np.zeros(gts[0].K, dtype=bool)
    for name in GROUP_NAMES:
        if name not in groups:
            continue
        idx = list(groups[name])
        use[idx] = True
        n = counted[:, idx].sum()
        out[name] = float((correct[:, idx] & counted[:, idx]).sum() / n) if n else float("nan")
    if not groups:
        use[:] = True
    n = counted[:, use].sum()
    out["total"] = float((correct[:, use] & counted[:, use]).sum() / n) if n else float("nan")
    return out
