"""Semi-supervised training: supervised branch, weak-view teacher, masked and mixed students."""
from __future__ import annotations

import base64
import csv
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from . import geometry as geo
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import TrainConfig, config_dict, from_flat, to_flat
from .data import (IngestionError, SampleRecord, SplitSpec, load_coco_keypoints,
                   load_synthetic, make_split, make_synthetic_dataset)
from .heatmap import KeypointSet, Visibility, decode_maps, gaussian_targets
from .masking import MaskBudget, allocate_mask_count, apply_keypoint_masks, random_mask_budget
from .metrics import (COCO_SIGMAS, OksParams, PckParams, UndefinedMetricError,
                      average_precision, oks, pck)
from .mixup import forward_with_mixup, mixed_consistency_loss, sample_mixup_spec
from .model import (BackboneConfig, EmptyMaskWarning, LossBundle, PoseNet, consistency_loss,
                    supervised_loss, total_loss)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("epoch", "l_s", "l_u", "l_m", "l_total", "lr", "ap", "ap50", "ap75", "ar",
               "pck_total", "mean_responsiveness", "mean_mask_count")
STREAMS = ("labeled", "unlabeled", "sup_aug", "teacher_aug", "student_aug", "mask", "mixup")
SYNTH_SIGMA = 0.05


class NonFiniteLossError(RuntimeError):
    def __init__(self, msg, labeled_ids=(), unlabeled_ids=()):
        super().__init__(msg)
        self.labeled_ids = list(labeled_ids)
        self.unlabeled_ids = list(unlabeled_ids)


class Streams:
    """Independent generators per branch so enabling one branch never shifts another's draws."""

    def __init__(self, seed: int):
        children = np.random.SeedSequence(seed).spawn(len(STREAMS))
        for name, ss in zip(STREAMS, children):
            setattr(self, name, np.random.default_rng(ss))

    def state(self) -> dict:
        return {name: getattr(self, name).bit_generator.state for name in STREAMS}

    def restore(self, state: dict):
        for name in STREAMS:
            getattr(self, name).bit_generator.state = state[name]


@dataclass
class LabeledBatch:
    images: np.ndarray      # (N, 3, H, W)
    coords: np.ndarray      # (N, K, 2)
    visibility: np.ndarray  # (N, K)
    ids: Sequence = ()


@dataclass
class UnlabeledBatch:
    images: np.ndarray
    ids: Sequence = ()
    index: Optional[np.ndarray] = None  # rows into the unlabeled pool


def images_chw(records: Sequence[SampleRecord]) -> np.ndarray:
    return np.stack([np.transpose(r.image, (2, 0, 1)) for r in records]).astype(np.float32)


def model_for(cfg: TrainConfig, K: int) -> PoseNet:
    return PoseNet(replace(cfg.model, out_joints=K))


def heatmap_geometry(cfg: TrainConfig) -> Tuple[Tuple[int, int], float]:
    size = tuple(cfg.data.input_size)
    out = cfg.model.output_size(size)
    return out, size[1] / out[1]


def _inside(pts: np.ndarray, h: int, w: int) -> np.ndarray:
    return (pts[..., 0] >= 0) & (pts[..., 0] <= w - 1) & (pts[..., 1] >= 0) & (pts[..., 1] <= h - 1)


def supervised_branch(model, batch: LabeledBatch, cfg: TrainConfig, rng: np.random.Generator):
    h, w = cfg.data.input_size
    hm_size, stride = heatmap_geometry(cfg)
    mats = np.stack([geo.sample_weak(rng, (h, w), cfg.aug).matrix for _ in range(len(batch.images))])
    x = geo.warp_batch(torch.from_numpy(batch.images), mats)
    coords = geo.transform_points(mats, batch.coords)
    labeled = (batch.visibility > 0) & _inside(coords, h, w)
    targets = gaussian_targets(coords, labeled, cfg.data.sigma, hm_size, stride)
    pred = model(x)
    return supervised_loss(pred, torch.from_numpy(targets), torch.from_numpy(labeled))


def teacher_pass(model, images: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    """Weak view and teacher heatmaps (no gradient)."""
    h, w = cfg.data.input_size
    mats = np.stack([geo.sample_weak(rng, (h, w), cfg.aug).matrix for _ in range(len(images))])
    x_w = geo.warp_batch(torch.from_numpy(images), mats)
    with torch.no_grad():
        heat = model(x_w)
    return x_w, mats, heat


def mask_budgets(resp: np.ndarray, mode: str, cfg: TrainConfig,
                 rng: np.random.Generator) -> List[MaskBudget]:
    K = resp.shape[1]
    if mode == "adaptive":
        return [allocate_mask_count(r, cfg.mask) for r in resp]
    if mode == "random":
        return [random_mask_budget(K, cfg.mask, rng) for _ in resp]
    return [MaskBudget(0, 0, np.zeros(K)) for _ in resp]


def train_step(model, optimizer, labeled: LabeledBatch, unlabeled: Optional[UnlabeledBatch],
               cfg: TrainConfig, streams: Streams, ramp: float = 1.0,
               pseudo_bank: Optional[np.ndarray] = None):
    """One optimizer step on the combined loss. Returns ``(LossBundle, diagnostics)``."""
    h, w = cfg.data.input_size
    hm_size, stride = heatmap_geometry(cfg)
    diag: Dict[str, object] = {}

    l_s = supervised_branch(model, labeled, cfg, streams.sup_aug)
    l_u = l_m = 0.0
    semi = unlabeled is not None and cfg.uses_unlabeled
    if cfg.method == "pseudo-pose" and pseudo_bank is None:
        semi = False

    if semi:
        x_raw = torch.from_numpy(unlabeled.images)
        n = len(unlabeled.images)
        if cfg.method == "pseudo-pose":
            mats_w = np.broadcast_to(geo.identity(), (n, 2, 3)).copy()
            heat = torch.from_numpy(pseudo_bank[unlabeled.index])
            x_w = x_raw
        else:
            x_w, mats_w, heat = teacher_pass(model, unlabeled.images, cfg, streams.teacher_aug)
        heat_np = heat.numpy()
        coords_w, _ = decode_maps(heat_np, stride)
        resp = heat_np.reshape(n, heat_np.shape[1], -1).max(axis=-1)
        diag["mean_responsiveness"] = float(resp.mean())

        # student 1: strong affine + keypoint masks, against warped pseudo heatmaps
        mats_s = np.stack([geo.sample_strong(streams.student_aug, (h, w), cfg.aug).matrix
                           for _ in range(n)])
        rel = geo.relative_transform(mats_s, mats_w)
        x_s = geo.warp_batch(x_raw, mats_s).numpy()
        joints_s = geo.transform_points(rel, coords_w)
        in_frame = _inside(joints_s, h, w)
        budgets = mask_budgets(resp, cfg.masking, cfg, streams.mask)
        masked = np.empty_like(x_s)
        for i in range(n):
            vis = np.where(in_frame[i], Visibility.VISIBLE, Visibility.NOT_LABELED)
            masked[i], _ = apply_keypoint_masks(x_s[i], KeypointSet(joints_s[i], vis), budgets[i],
                                                cfg.mask, streams.mask)
        pseudo = geo.warp_batch(heat, geo.heatmap_matrix(rel, stride))
        valid = _inside(joints_s / stride, hm_size[0], hm_size[1]) & (resp >= cfg.pseudo_threshold)
        pred_s = model(torch.from_numpy(masked))
        with warnings.catch_warnings():
            # a batch whose teacher joints are all gated out simply contributes nothing
            warnings.simplefilter("ignore", EmptyMaskWarning)
            l_u = consistency_loss(pred_s, pseudo, torch.from_numpy(valid))
        diag["budgets"] = budgets
        diag["mask_counts"] = [b.count for b in budgets]

        # student 2: mixup of the weak views at the configured location
        if cfg.uses_mixup:
            spec = sample_mixup_spec(n, cfg.mixup, streams.mixup, model.locations)
            pred_m = forward_with_mixup(model, x_w, spec)
            partner = torch.as_tensor(spec.partner, dtype=torch.long)
            l_m = mixed_consistency_loss(pred_m, heat, heat[partner],
                                         torch.as_tensor(spec.alpha, dtype=heat.dtype))
            diag["mix_location"] = spec.location

    lam_u = ramp * cfg.lambda_u if semi else 0.0
    lam_m = ramp * cfg.mixup.lambda_m if semi and cfg.uses_mixup else 0.0
    bundle = total_loss(l_s, l_u, l_m, lam_u, lam_m)
    if not all(math.isfinite(v) for v in (bundle.l_s, bundle.l_u, bundle.l_m, bundle.total)):
        raise NonFiniteLossError(f"non-finite loss {bundle}", labeled.ids,
                                 unlabeled.ids if unlabeled is not None else ())
    optimizer.zero_grad(set_to_none=True)
    bundle.tensor.backward()
    optimizer.step()
    return bundle, diag


# ------------------------------------------------------------ evaluation

def predict(model, images: np.ndarray, stride: float, batch: int = 256):
    outs = []
    with torch.no_grad():
        for i in range(0, len(images), batch):
            outs.append(model(torch.from_numpy(images[i:i + batch])).numpy())
    heat = np.concatenate(outs) if outs else np.zeros((0,))
    coords, scores = decode_maps(heat, stride)
    return coords, scores, heat


def mean_responsiveness(model, images: np.ndarray, stride: float) -> float:
    _, scores, _ = predict(model, images, stride)
    return float(scores.mean())


def evaluate_records(model, records: Sequence[SampleRecord], stride: float,
                     protocols=("oks", "pck")) -> dict:
    """Decode every record and score it under the requested protocols."""
    gts = [r.keypoints if r.keypoints is not None else r.sealed for r in records]
    if any(g is None for g in gts):
        raise ValueError("evaluation needs annotated records")
    K = gts[0].K
    if model.cfg.out_joints != K:
        raise ValueError(f"model predicts {model.cfg.out_joints} joints but data has {K}")
    coords, scores, _ = predict(model, images_chw(records), stride)
    preds = [KeypointSet.all_visible(c) for c in coords]
    out: dict = {}
    if "oks" in protocols:
        sigmas = COCO_SIGMAS if K == 17 else np.full(K, SYNTH_SIGMA)
        inst = []
        for r, p, g, s in zip(records, preds, gts, scores):
            area = r.meta.get("area") or r.bbox[2] * r.bbox[3]
            try:
                inst.append((float(s.mean()), oks(p, g, OksParams(sigmas, area))))
            except UndefinedMetricError:
                continue
        res = average_precision(inst)
        out.update(ap=res.ap, ap50=res.ap50, ap75=res.ap75, ar=res.ar)
    if "pck" in protocols:
        rects = [r.meta.get("head_rect") for r in records]
        if any(rc is None for rc in rects):
            raise ValueError("pck protocol needs head_rect metadata on every record")
        out["pck"] = pck(preds, gts, PckParams(0.5, "head-diameter"), head_rects=rects)
    return out


# ------------------------------------------------------------- datasets

def resolve_datasets(cfg: TrainConfig) -> Dict[str, List[SampleRecord]]:
    d = cfg.data
    if d.source == "synthetic":
        return make_synthetic_dataset(d.train_count, d.val_count, d.synth_seed,
                                      d.occlusion_frac, d.low_contrast_frac, d.input_size)
    if d.source == "synthetic-dir":
        return load_synthetic(d.dir)
    if d.source == "coco":
        recs = load_coco_keypoints(d.coco_annotations, d.coco_images, d.input_size)
        rng = np.random.default_rng(d.split_seed + 1)
        order = rng.permutation(len(recs))
        n_val = min(d.val_count, len(recs) // 5)
        return {"val": [recs[i] for i in order[:n_val]],
                "train": [recs[i] for i in order[n_val:]]}
    raise IngestionError(f"unknown data source {d.source!r}")


# ---------------------------------------------------------------- state

def _state_arrays(model, optimizer, pseudo_bank) -> Tuple[dict, dict]:
    arrays = {f"model/{k}": v.detach().numpy() for k, v in model.state_dict().items()}
    steps = []
    for i, p in enumerate(model.parameters()):
        st = optimizer.state.get(p)
        if st:
            arrays[f"optim/{i}/exp_avg"] = st["exp_avg"].numpy()
            arrays[f"optim/{i}/exp_avg_sq"] = st["exp_avg_sq"].numpy()
            steps.append(float(st["step"]))
        else:
            steps.append(None)
    if pseudo_bank is not None:
        arrays["extra/pseudo_bank"] = pseudo_bank
    return arrays, {"optim_steps": steps}


def save_state(path, model, optimizer, cfg: TrainConfig, epoch: int, streams: Streams,
               best: Optional[float], pseudo_bank=None, K: int = 16):
    arrays, extra = _state_arrays(model, optimizer, pseudo_bank)
    meta = {
        "epoch": epoch,
        "joints": K,
        "best": best,
        "config": to_flat(cfg),
        "rng": streams.state(),
        "torch_rng": base64.b64encode(torch.get_rng_state().numpy().tobytes()).decode("ascii"),
        "lr": [g["lr"] for g in optimizer.param_groups],
        **extra,
    }
    return save_checkpoint(path, arrays, meta)


def restore_state(path, model, optimizer=None, streams: Optional[Streams] = None):
    arrays, meta = load_checkpoint(path)
    K = meta["joints"]
    if model.cfg.out_joints != K:
        raise CheckpointError(f"checkpoint has {K} joints, model expects {model.cfg.out_joints}")
    sd = {k[len("model/"):]: torch.from_numpy(v.copy()) for k, v in arrays.items()
          if k.startswith("model/")}
    model.load_state_dict(sd)
    if optimizer is not None:
        for i, p in enumerate(model.parameters()):
            step = meta["optim_steps"][i]
            if step is None:
                continue
            optimizer.state[p] = {
                "step": torch.tensor(step, dtype=torch.float32),
                "exp_avg": torch.from_numpy(arrays[f"optim/{i}/exp_avg"].copy()),
                "exp_avg_sq": torch.from_numpy(arrays[f"optim/{i}/exp_avg_sq"].copy()),
            }
        for g, lr in zip(optimizer.param_groups, meta["lr"]):
            g["lr"] = lr
    if streams is not None:
        streams.restore(meta["rng"])
    torch_state = np.frombuffer(base64.b64decode(meta["torch_rng"]), dtype=np.uint8).copy()
    torch.set_rng_state(torch.from_numpy(torch_state))
    return meta, arrays.get("extra/pseudo_bank")


def load_model(ckpt_path) -> Tuple[PoseNet, TrainConfig, dict]:
    _, meta = load_checkpoint(ckpt_path)
    cfg = from_flat(meta["config"])
    model = model_for(cfg, meta["joints"])
    restore_state(ckpt_path, model)
    return model, cfg, meta


# ------------------------------------------------------------------ fit

def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


class Run:
    """Owns the model, optimizer, data pools and rng streams of one training run."""

    def __init__(self, cfg: TrainConfig, datasets: Optional[Dict[str, List[SampleRecord]]] = None):
        if cfg.threads:
            torch.set_num_threads(cfg.threads)
        self.cfg = cfg
        datasets = datasets if datasets is not None else resolve_datasets(cfg)
        labeled, unlabeled = make_split(datasets["train"], SplitSpec(cfg.data.labels, cfg.data.split_seed,
                                                                     cfg.data.source))
        if not labeled:
            raise ValueError("training needs at least one labeled record")
        self.labeled = [r.training_view() for r in labeled]
        self.unlabeled = [r.training_view() for r in unlabeled]
        self.val = datasets["val"]
        self.K = self.labeled[0].keypoints.K
        self.hm_size, self.stride = heatmap_geometry(cfg)
        self.lab_images = images_chw(self.labeled)
        self.lab_coords = np.stack([r.keypoints.coords for r in self.labeled])
        self.lab_vis = np.stack([r.keypoints.visibility for r in self.labeled])
        self.unl_images = images_chw(self.unlabeled) if self.unlabeled else None
        torch.manual_seed(cfg.seed)
        self.model = model_for(cfg, self.K)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=cfg.lr_initial,
                                          betas=tuple(cfg.betas), eps=cfg.eps)
        self.streams = Streams(cfg.seed)
        self.epoch = 0
        self.best: Optional[float] = None
        self.pseudo_bank: Optional[np.ndarray] = None
        pool = len(self.unlabeled) if self.unlabeled else len(self.labeled)
        self.steps_per_epoch = max(1, math.ceil(pool / cfg.batch_unlabeled))

    def labeled_batch(self) -> LabeledBatch:
        n = len(self.labeled)
        idx = self.streams.labeled.choice(n, size=min(self.cfg.batch_labeled, n), replace=False)
        return LabeledBatch(self.lab_images[idx], self.lab_coords[idx], self.lab_vis[idx],
                            [self.labeled[i].meta.get("source_id") for i in idx])

    def unlabeled_batches(self):
        if not self.unlabeled:
            return [None] * self.steps_per_epoch
        order = self.streams.unlabeled.permutation(len(self.unlabeled))
        b = self.cfg.batch_unlabeled
        return [order[i:i + b] for i in range(0, len(order), b)]

    def ramp(self, step: int) -> float:
        warm = self.cfg.warmup_epochs * self.steps_per_epoch
        return 1.0 if warm <= 0 else min(1.0, (step + 1) / warm)

    def pseudo_phase(self) -> bool:
        return self.cfg.method == "pseudo-pose" and self.epoch >= round(self.cfg.epochs * self.cfg.pseudo_warmup_frac)

    def train_epoch(self):
        cfg = self.cfg
        if self.pseudo_phase() and self.pseudo_bank is None and self.unlabeled:
            _, _, self.pseudo_bank = predict(self.model, self.unl_images, self.stride)
        lr = cfg.lr_at(self.epoch)
        for g in self.optimizer.param_groups:
            g["lr"] = lr
        sums = np.zeros(4)
        counts: List[int] = []
        budgets: List[dict] = []
        resp = []
        use_unl = cfg.uses_unlabeled and (cfg.method != "pseudo-pose" or self.pseudo_bank is not None)
        for k, idx in enumerate(self.unlabeled_batches()):
            unl = None
            if use_unl and idx is not None:
                unl = UnlabeledBatch(self.unl_images[idx],
                                     [self.unlabeled[i].meta.get("source_id") for i in idx], idx)
            step = self.epoch * self.steps_per_epoch + k
            bundle, diag = train_step(self.model, self.optimizer, self.labeled_batch(), unl, cfg,
                                      self.streams, self.ramp(step), self.pseudo_bank)
            sums += (bundle.l_s, bundle.l_u, bundle.l_m, bundle.total)
            counts += diag.get("mask_counts", [])
            if "mean_responsiveness" in diag:
                resp.append(diag["mean_responsiveness"])
        self.epoch += 1
        n = self.steps_per_epoch
        row = {"epoch": self.epoch, "l_s": sums[0] / n, "l_u": sums[1] / n, "l_m": sums[2] / n,
               "l_total": sums[3] / n, "lr": lr,
               "mean_mask_count": float(np.mean(counts)) if counts else None}
        hist = np.bincount(counts, minlength=cfg.mask.m + 1).tolist() if counts else []
        diag_row = {"epoch": self.epoch, "mask_count_hist": hist,
                    "train_teacher_responsiveness": float(np.mean(resp)) if resp else None}
        return row, diag_row

    def evaluate(self) -> dict:
        protocols = ("oks", "pck") if self.cfg.data.protocol in ("pck", "both") else ("oks",)
        res = evaluate_records(self.model, self.val, self.stride, protocols)
        pool = self.unl_images if self.unl_images is not None else self.lab_images
        res["mean_responsiveness"] = mean_responsiveness(self.model, pool, self.stride)
        return res


def _metric_row(res: dict) -> dict:
    return {"ap": res.get("ap"), "ap50": res.get("ap50"), "ap75": res.get("ap75"),
            "ar": res.get("ar"), "pck_total": res.get("pck", {}).get("total"),
            "mean_responsiveness": res.get("mean_responsiveness")}


def fit(cfg: TrainConfig, run_dir, datasets=None, resume: bool = False,
        stop_after: Optional[int] = None) -> Path:
    """Train for ``cfg.epochs`` epochs, writing metrics, diagnostics and checkpoints to ``run_dir``.

    ``stop_after`` ends the process early after that many epochs (as an
    interruption would); ``resume`` continues from ``ckpt-last``.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, datasets)
    metrics_path = run_dir / "metrics.csv"
    diag_path = run_dir / "diagnostics.jsonl"
    last = run_dir / "ckpt-last"
    if resume and last.exists():
        meta, bank = restore_state(last, run.model, run.optimizer, run.streams)
        if meta["config"] != to_flat(cfg):
            raise CheckpointError("checkpoint was written under a different configuration")
        run.epoch = meta["epoch"]
        run.best = meta["best"]
        run.pseudo_bank = bank
        _truncate_csv(metrics_path, run.epoch)
        _truncate_jsonl(diag_path, run.epoch)
    else:
        (run_dir / "config.json").write_text(json.dumps({"flat": to_flat(cfg), "tree": config_dict(cfg)},
                                                        indent=1), encoding="utf-8")
        with open(metrics_path, "w", newline="") as fh:
            csv.writer(fh).writerow(CSV_COLUMNS)
        diag_path.write_text("", encoding="utf-8")
        row = {"epoch": 0, "lr": cfg.lr_at(0), **_metric_row(run.evaluate())}
        _append_csv(metrics_path, row)

    while run.epoch < cfg.epochs:
        if stop_after is not None and run.epoch >= stop_after:
            return run_dir
        t0 = time.time()
        try:
            row, diag_row = run.train_epoch()
        except NonFiniteLossError as err:
            save_state(run_dir / "ckpt-failed", run.model, run.optimizer, cfg, run.epoch,
                       run.streams, run.best, run.pseudo_bank, run.K)
            (run_dir / "failed-batch.json").write_text(json.dumps(
                {"labeled_ids": err.labeled_ids, "unlabeled_ids": err.unlabeled_ids}, default=str))
            raise
        if run.epoch % cfg.eval_every == 0 or run.epoch == cfg.epochs:
            res = run.evaluate()
            row.update(_metric_row(res))
            score = row.get(cfg.select_metric)
            if score is not None and (run.best is None or score > run.best):
                run.best = score
                save_state(run_dir / "ckpt-best", run.model, run.optimizer, cfg, run.epoch,
                           run.streams, run.best, run.pseudo_bank, run.K)
        _append_csv(metrics_path, row)
        with open(diag_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(diag_row) + "\n")
        save_state(last, run.model, run.optimizer, cfg, run.epoch, run.streams, run.best,
                   run.pseudo_bank, run.K)
        log.info("epoch %d  loss %.5f  pck %s  (%.1fs)", run.epoch, row["l_total"],
                 row.get("pck_total"), time.time() - t0)
    if not last.exists():
        save_state(last, run.model, run.optimizer, cfg, run.epoch, run.streams, run.best,
                   run.pseudo_bank, run.K)
    return run_dir


def _append_csv(path, row: dict):
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])


def _truncate_csv(path, epoch: int):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    keep = [rows[0]] + [r for r in rows[1:] if int(r[0]) <= epoch]
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(keep)


def _truncate_jsonl(path, epoch: int):
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if ln and json.loads(ln)["epoch"] <= epoch]
    Path(path).write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")


def read_metrics(run_dir) -> List[dict]:
    with open(Path(run_dir) / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else None) for k, v in r.items()} for r in rows]


def evaluate(checkpoint, data, protocol: str = "pck") -> dict:
    """Score a checkpoint on a dataset directory (its ``val`` split, else every split)."""
    model, cfg, _ = load_model(checkpoint)
    splits = load_synthetic(data) if not isinstance(data, (list, tuple)) else {"val": list(data)}
    records = splits.get("val") or [r for recs in splits.values() for r in recs]
    if records[0].keypoints.K != model.cfg.out_joints:
        raise ValueError(f"checkpoint predicts {model.cfg.out_joints} joints, data has "
                         f"{records[0].keypoints.K}")
    _, stride = heatmap_geometry(cfg)
    return evaluate_records(model, records, stride, (protocol,))


def allocate_masks(checkpoint, data) -> List[dict]:
    """Mask budgets the checkpoint's teacher assigns to every record (un-augmented view)."""
    model, cfg, _ = load_model(checkpoint)
    splits = load_synthetic(data)
    records = [r for recs in splits.values() for r in recs]
    _, stride = heatmap_geometry(cfg)
    _, scores, _ = predict(model, images_chw(records), stride)
    return [allocate_mask_count(s, cfg.mask).to_json(r.meta.get("source_id"))
            for r, s in zip(records, scores)]
