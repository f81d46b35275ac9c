"""Sample records, labeled/unlabeled splits, COCO ingestion and synthetic stick figures."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from PIL import Image
from scipy.ndimage import gaussian_filter

from .geometry import transform_keypoints, warp_batch
from .heatmap import KeypointSet, Visibility

log = logging.getLogger(__name__)

NORM_MEAN = 0.5
NORM_STD = 0.25
SYNTH_SCHEMA = "ADAPTMASK-SYNTH-1"

MPII_JOINTS = ("r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "pelvis", "thorax",
               "upper_neck", "head_top", "r_wrist", "r_elbow", "r_shoulder", "l_shoulder",
               "l_elbow", "l_wrist")
# (parent, child, rgb) -- one colour per bone so left and right limbs are distinguishable
BONES = (
    (6, 7, (0.95, 0.95, 0.95)), (7, 8, (0.9, 0.9, 0.2)), (8, 9, (0.9, 0.6, 0.1)),
    (7, 12, (1.0, 0.2, 0.2)), (12, 11, (1.0, 0.5, 0.5)), (11, 10, (0.6, 0.0, 0.0)),
    (7, 13, (0.2, 0.3, 1.0)), (13, 14, (0.5, 0.7, 1.0)), (14, 15, (0.0, 0.0, 0.6)),
    (6, 2, (0.2, 0.9, 0.2)), (2, 1, (0.6, 1.0, 0.4)), (1, 0, (0.0, 0.5, 0.0)),
    (6, 3, (0.9, 0.2, 0.9)), (3, 4, (1.0, 0.6, 1.0)), (4, 5, (0.5, 0.0, 0.5)),
)


class IngestionError(RuntimeError):
    pass


def normalize(image_u8: np.ndarray) -> np.ndarray:
    return ((image_u8.astype(np.float32) / 255.0 - NORM_MEAN) / NORM_STD).astype(np.float32)


def denormalize(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round((image * NORM_STD + NORM_MEAN) * 255.0), 0, 255).astype(np.uint8)


@dataclass
class SampleRecord:
    """One person crop. ``image`` is (H, W, 3), normalized; ``keypoints`` is None when unlabeled.

    ``sealed`` holds the annotations of an unlabeled record for evaluation only;
    ``training_view`` drops it.
    """

    image: np.ndarray
    keypoints: Optional[KeypointSet]
    bbox: Tuple[float, float, float, float]
    meta: Dict = field(default_factory=dict)
    sealed: Optional[KeypointSet] = field(default=None, repr=False)

    @property
    def labeled(self) -> bool:
        return self.keypoints is not None

    def training_view(self) -> "SampleRecord":
        return replace(self, sealed=None)


@dataclass
class SplitSpec:
    labeled_count: int
    seed: int = 0
    source: str = "synthetic"


def make_split(records: Sequence[SampleRecord], spec: SplitSpec
               ) -> Tuple[List[SampleRecord], List[SampleRecord]]:
    """Seeded shuffle; the first ``labeled_count`` annotated records stay labeled.

    Everything else becomes unlabeled, its annotations moved to ``sealed``.
    """
    if spec.labeled_count < 0 or spec.labeled_count > len(records):
        raise IngestionError(f"cannot take {spec.labeled_count} labels from {len(records)} records")
    order = np.random.default_rng(spec.seed).permutation(len(records))
    labeled, unlabeled = [], []
    for i in order:
        rec = records[i]
        if rec.keypoints is not None and len(labeled) < spec.labeled_count:
            labeled.append(rec)
        else:
            unlabeled.append(replace(rec, keypoints=None, sealed=rec.keypoints or rec.sealed))
    if len(labeled) < spec.labeled_count:
        raise IngestionError(f"only {len(labeled)} annotated records for {spec.labeled_count} labels")
    return labeled, unlabeled


# ---------------------------------------------------------------- COCO

def _crop_matrix(bbox, input_size) -> np.ndarray:
    """Expand ``bbox`` to the input aspect ratio and map it onto the input frame."""
    x, y, w, h = (float(v) for v in bbox)
    out_h, out_w = input_size
    ratio = out_w / out_h
    cx, cy = x + w / 2.0, y + h / 2.0
    if w > ratio * h:
        h = w / ratio
    else:
        w = h * ratio
    s = out_w / w
    x0, y0 = cx - w / 2.0, cy - h / 2.0
    return np.array([[s, 0.0, -x0 * s], [0.0, s, -y0 * s]])


def crop_record(image_chw: np.ndarray, kps: KeypointSet, bbox, input_size, meta=None
                ) -> SampleRecord:
    """Crop-and-resize one person; keypoints follow the crop and lose their label outside it."""
    m = _crop_matrix(bbox, input_size)
    t = torch.as_tensor(image_chw, dtype=torch.float32)[None]
    crop = warp_batch(t, m, out_size=tuple(input_size))[0].numpy()
    moved = transform_keypoints(m, kps, input_size)
    meta = dict(meta or {})
    meta["crop_matrix"] = m.tolist()
    if meta.get("head_rect") is not None:
        (x0, y0), (x1, y1) = meta["head_rect"]
        s = m[0, 0]
        meta["head_rect"] = [[x0 * s + m[0, 2], y0 * s + m[1, 2]],
                             [x1 * s + m[0, 2], y1 * s + m[1, 2]]]
    if meta.get("area") is not None:
        meta["area"] = float(meta["area"]) * m[0, 0] ** 2
    keypoints = moved if moved.labeled.any() else None
    bx, by, bw, bh = (float(v) for v in bbox)
    new_box = (bx * m[0, 0] + m[0, 2], by * m[1, 1] + m[1, 2], bw * m[0, 0], bh * m[1, 1])
    image = np.transpose(crop, (1, 2, 0))
    return SampleRecord(image.astype(np.float32), keypoints, new_box, meta)


def load_coco_keypoints(annotation_file, image_root, input_size=(256, 192),
                        num_joints: int = 17) -> List[SampleRecord]:
    """One record per person annotation, cropped to ``input_size`` (h, w)."""
    path = Path(annotation_file)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise IngestionError(f"annotation file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise IngestionError(f"malformed JSON in {path}: {e}") from e
    if "images" not in data or "annotations" not in data:
        raise IngestionError(f"{path} lacks 'images' or 'annotations'")
    images = {img["id"]: img for img in data["images"]}
    cache: Dict[object, np.ndarray] = {}
    records = []
    for ann in data["annotations"]:
        ann_id = ann.get("id")
        kp = ann.get("keypoints")
        if kp is None or len(kp) != 3 * num_joints:
            log.warning("annotation %s: expected %d keypoint values, skipping", ann_id, 3 * num_joints)
            continue
        if "bbox" not in ann or ann.get("image_id") not in images:
            raise IngestionError(f"annotation {ann_id}: missing bbox or unknown image_id")
        img_id = ann["image_id"]
        if img_id not in cache:
            img_path = Path(image_root) / images[img_id]["file_name"]
            try:
                with Image.open(img_path) as im:
                    arr = np.asarray(im.convert("RGB"))
            except (FileNotFoundError, OSError) as e:
                raise IngestionError(f"annotation {ann_id}: cannot read image {img_path}") from e
            cache[img_id] = np.transpose(normalize(arr), (2, 0, 1))
        trip = np.asarray(kp, dtype=np.float64).reshape(num_joints, 3)
        kps = KeypointSet(trip[:, :2], trip[:, 2].astype(np.int64))
        meta = {"source_id": ann_id, "image_id": img_id, "area": ann.get("area"),
                "head_rect": ann.get("head_rect")}
        records.append(crop_record(cache[img_id], kps, ann["bbox"], input_size, meta))
    return records


# ---------------------------------------------------------- synthetic

@dataclass
class SynthConfig:
    image_size: Tuple[int, int] = (64, 64)
    occlusion_frac: float = 0.15
    low_contrast_frac: float = 0.15
    margin: float = 3.0


def _dir(angle):
    return np.array([math.sin(angle), -math.cos(angle)])


def _pose(rng: np.random.Generator) -> np.ndarray:
    """Joint positions (16, 2) for a figure of unit height centred near the origin."""
    j = np.zeros((16, 2))
    torso = rng.normal(0.0, 0.2)
    up = _dir(torso)
    side = np.array([-up[1], up[0]])  # image-left when facing the viewer
    j[6] = 0.0
    j[7] = j[6] + 0.30 * up
    j[8] = j[7] + 0.07 * _dir(torso + rng.normal(0, 0.15))
    j[9] = j[8] + 0.13 * _dir(torso + rng.normal(0, 0.25))
    j[2] = j[6] - 0.08 * side
    j[3] = j[6] + 0.08 * side
    j[12] = j[7] - 0.11 * side
    j[13] = j[7] + 0.11 * side
    for sh, el, wr, sign in ((12, 11, 10, -1), (13, 14, 15, 1)):
        a = torso + math.pi + sign * rng.uniform(-0.3, 2.6)
        j[el] = j[sh] + 0.16 * _dir(a)
        j[wr] = j[el] + 0.15 * _dir(a + sign * rng.uniform(-0.2, 2.4))
    for hip, kn, an, sign in ((2, 1, 0, -1), (3, 4, 5, 1)):
        a = torso + math.pi + sign * rng.uniform(-0.25, 1.0)
        j[kn] = j[hip] + 0.23 * _dir(a)
        j[an] = j[kn] + 0.22 * _dir(a - sign * rng.uniform(0.0, 1.8))
    return j - j.mean(axis=0)


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    base = rng.uniform(0.2, 0.6, size=3)
    noise = gaussian_filter(rng.normal(0, 1, size=(3, h, w)), sigma=(0, 3, 3))
    noise /= noise.std() + 1e-8
    fine = rng.normal(0, 0.04, size=(3, h, w))
    return np.clip(base[:, None, None] + 0.08 * noise + fine, 0, 1)


def _segment_coverage(p0, p1, half, xs, ys) -> np.ndarray:
    d = p1 - p0
    ll = float(d @ d) or 1e-12
    t = np.clip(((xs - p0[0]) * d[0] + (ys - p0[1]) * d[1]) / ll, 0.0, 1.0)
    dist = np.hypot(xs - (p0[0] + t * d[0]), ys - (p0[1] + t * d[1]))
    return np.clip(half + 0.5 - dist, 0.0, 1.0)


def _render_one(rng: np.random.Generator, cfg: SynthConfig):
    h, w = cfg.image_size
    for _ in range(100):
        pose = _pose(rng)
        extent = pose.max(axis=0) - pose.min(axis=0)
        scale = rng.uniform(0.55, 0.85) * (h - 2 * cfg.margin) / max(extent[1], 0.5 * extent[0] * h / w)
        rot = rng.uniform(-0.4, 0.4)
        c, s = math.cos(rot), math.sin(rot)
        pts = pose @ np.array([[c, s], [-s, c]]) * scale
        lo = cfg.margin - pts.min(axis=0)
        hi = np.array([w - 1, h - 1]) - cfg.margin - pts.max(axis=0)
        if np.all(hi >= lo):
            pts = pts + rng.uniform(lo, hi)
            break
    else:  # pragma: no cover - the scale range always fits
        raise RuntimeError("could not place figure inside the image")

    img = _texture(rng, h, w)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    half = max(0.9, 0.028 * scale)
    figure = np.zeros((3, h, w))
    alpha = np.zeros((h, w))
    jitter = rng.uniform(-0.1, 0.1, size=3)
    for a, b, col in BONES:
        cov = _segment_coverage(pts[a], pts[b], half, xs, ys)
        col = np.clip(np.asarray(col) + jitter, 0, 1)
        figure = figure * (1 - cov) + col[:, None, None] * cov
        alpha = np.maximum(alpha, cov)
    head_c = (pts[8] + pts[9]) / 2.0
    head_r = max(1.5, 0.5 * np.linalg.norm(pts[9] - pts[8]))
    hcov = np.clip(head_r + 0.5 - np.hypot(xs - head_c[0], ys - head_c[1]), 0, 1)
    figure = figure * (1 - hcov) + np.array([0.95, 0.8, 0.6])[:, None, None] * hcov
    alpha = np.maximum(alpha, hcov)

    kind = "clean"
    u = rng.uniform()
    strength = 1.0
    if u < cfg.low_contrast_frac:
        kind = "low-contrast"
        strength = rng.uniform(0.15, 0.35)
    img = img * (1 - strength * alpha) + figure * strength * alpha

    vis = np.full(16, Visibility.VISIBLE, dtype=np.int64)
    if kind == "low-contrast":
        img = gaussian_filter(img, sigma=(0, 0.8, 0.8)) + rng.normal(0, 0.05, size=img.shape)
    elif u < cfg.low_contrast_frac + cfg.occlusion_frac:
        kind = "occluded"
        for _ in range(int(rng.integers(1, 3))):
            target = pts[int(rng.integers(16))]
            bw, bh = rng.uniform(0.12, 0.3) * w, rng.uniform(0.12, 0.3) * h
            x0 = int(round(target[0] - bw * rng.uniform(0.2, 0.8)))
            y0 = int(round(target[1] - bh * rng.uniform(0.2, 0.8)))
            x1, y1 = x0 + int(round(bw)), y0 + int(round(bh))
            x0c, y0c, x1c, y1c = max(x0, 0), max(y0, 0), min(x1, w), min(y1, h)
            img[:, y0c:y1c, x0c:x1c] = _texture(rng, h, w)[:, y0c:y1c, x0c:x1c]
            inside = ((pts[:, 0] >= x0c - 0.5) & (pts[:, 0] < x1c - 0.5)
                      & (pts[:, 1] >= y0c - 0.5) & (pts[:, 1] < y1c - 0.5))
            vis[inside] = Visibility.INVISIBLE

    u8 = np.clip(np.round(np.clip(img, 0, 1) * 255.0), 0, 255).astype(np.uint8)
    u8 = np.ascontiguousarray(np.transpose(u8, (1, 2, 0)))
    head_rect = [[head_c[0] - head_r, head_c[1] - head_r], [head_c[0] + head_r, head_c[1] + head_r]]
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    pad = half + 1
    bbox = (float(x0 - pad), float(y0 - pad), float(x1 - x0 + 2 * pad), float(y1 - y0 + 2 * pad))
    return u8, KeypointSet(pts, vis), bbox, head_rect, kind


def generate_stick_figures(count: int, K: int = 16, image_size=(64, 64), seed: int = 0,
                           occlusion_frac: float = 0.15, low_contrast_frac: float = 0.15,
                           id_offset: int = 0) -> List[SampleRecord]:
    """Random articulated 16-joint figures over textured noise.

    A fraction of samples is degraded (low contrast and blur, or occluding
    patches whose covered joints are flagged invisible) to create hard cases.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if K != 16:
        raise ValueError("stick figures use the 16-joint MPII layout")
    cfg = SynthConfig(tuple(image_size), occlusion_frac, low_contrast_frac)
    children = np.random.SeedSequence(seed).spawn(count)
    records = []
    for i, ss in enumerate(children):
        u8, kps, bbox, head_rect, kind = _render_one(np.random.default_rng(ss), cfg)
        meta = {"source_id": id_offset + i, "head_rect": head_rect, "area": bbox[2] * bbox[3],
                "difficulty": kind, "u8": u8}
        records.append(SampleRecord(normalize(u8), kps, bbox, meta))
    return records


def _record_json(rec: SampleRecord, fname: str) -> dict:
    kps = rec.keypoints if rec.keypoints is not None else rec.sealed
    return {
        "id": rec.meta["source_id"],
        "file": fname,
        "keypoints": [[float(x), float(y), int(v)] for (x, y), v in zip(kps.coords, kps.visibility)],
        "bbox": [float(v) for v in rec.bbox],
        "head_rect": rec.meta.get("head_rect"),
        "area": rec.meta.get("area"),
        "difficulty": rec.meta.get("difficulty", "clean"),
    }


def save_synthetic(out_dir, splits: Dict[str, Sequence[SampleRecord]], meta: Optional[dict] = None) -> Path:
    """Write PNGs plus ``manifest.json``; ``splits`` maps split name to records."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    records, split_ids = [], {}
    size = None
    for name, recs in splits.items():
        split_ids[name] = []
        for rec in recs:
            rid = rec.meta["source_id"]
            fname = f"images/{rid:06d}.png"
            u8 = rec.meta.get("u8")
            if u8 is None:
                u8 = denormalize(rec.image)
            Image.fromarray(u8).save(out / fname, optimize=False)
            records.append(_record_json(rec, fname))
            split_ids[name].append(rid)
            size = list(u8.shape[:2])
    manifest = {"schema": SYNTH_SCHEMA, "joints": list(MPII_JOINTS), "image_size": size,
                "records": records, "splits": split_ids, "meta": meta or {}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return out


def load_synthetic(data_dir) -> Dict[str, List[SampleRecord]]:
    root = Path(data_dir)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise IngestionError(f"no manifest.json in {root}") from e
    except json.JSONDecodeError as e:
        raise IngestionError(f"malformed manifest in {root}: {e}") from e
    if manifest.get("schema") != SYNTH_SCHEMA:
        raise IngestionError(f"unsupported dataset schema {manifest.get('schema')!r}")
    by_id = {}
    for r in manifest["records"]:
        with Image.open(root / r["file"]) as im:
            u8 = np.asarray(im.convert("RGB"))
        trip = np.asarray(r["keypoints"], dtype=np.float64)
        kps = KeypointSet(trip[:, :2], trip[:, 2].astype(np.int64))
        meta = {"source_id": r["id"], "head_rect": r.get("head_rect"), "area": r.get("area"),
                "difficulty": r.get("difficulty", "clean"), "u8": u8}
        by_id[r["id"]] = SampleRecord(normalize(u8), kps, tuple(r["bbox"]), meta)
    return {name: [by_id[i] for i in ids] for name, ids in manifest["splits"].items()}


def make_synthetic_dataset(train_count: int, val_count: int, seed: int = 0,
                           occlusion_frac: float = 0.15, low_contrast_frac: float = 0.15,
                           image_size=(64, 64)) -> Dict[str, List[SampleRecord]]:
    train = generate_stick_figures(train_count, 16, image_size, seed, occlusion_frac,
                                   low_contrast_frac)
    val = generate_stick_figures(val_count, 16, image_size, seed + 1_000_003, occlusion_frac,
                                 low_contrast_frac, id_offset=train_count)
    return {"train": train, "val": val}
