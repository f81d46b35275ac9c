"""Tiny encoder-decoder heatmap network and the losses it trains on."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import torch
import torch.nn as nn


@dataclass
class BackboneConfig:
    """Stem, a list of (channels, downsample) stages, and a deconvolution head."""

    in_channels: int = 3
    stem_channels: int = 16
    stem_stride: int = 2
    stages: List[Tuple[int, bool]] = field(
        default_factory=lambda: [(16, False), (32, True), (32, True)])
    head_deconvs: int = 1
    head_channels: int = 32
    out_joints: int = 16

    def __post_init__(self):
        self.stages = [(int(c), bool(d)) for c, d in self.stages]
        if not self.stages:
            raise ValueError("backbone needs at least one stage")

    @property
    def locations(self) -> List[str]:
        return ["input"] + [f"stage-{i + 1}" for i in range(len(self.stages))] + ["pre-head"]

    def output_size(self, input_size: Tuple[int, int]) -> Tuple[int, int]:
        down = self.stem_stride * 2 ** sum(d for _, d in self.stages)
        up = 2 ** self.head_deconvs
        h, w = input_size
        if h % down or w % down:
            raise ValueError(f"input size {input_size} is not divisible by total stride {down}")
        return h // down * up, w // down * up

    def stride(self, input_size: Tuple[int, int]) -> float:
        return input_size[1] / self.output_size(input_size)[1]


def micro_config(out_joints: int = 4) -> BackboneConfig:
    """Two-stage backbone under 500 parameters producing 8x8 maps from 16x16 inputs."""
    return BackboneConfig(in_channels=3, stem_channels=3, stem_stride=2,
                          stages=[(3, True), (3, False)], head_deconvs=1,
                          head_channels=3, out_joints=out_joints)


class PoseNet(nn.Module):
    """Conv stem, conv stages, transposed-conv head, 1x1 output layer.

    Every named location is the boundary just before a segment runs, so
    mixing at ``stage-3`` mixes the output of stage 2.
    """

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        act = nn.ReLU
        self.stem = nn.Sequential(
            nn.Conv2d(cfg.in_channels, cfg.stem_channels, 3, stride=cfg.stem_stride, padding=1),
            act())
        stages = []
        prev = cfg.stem_channels
        for ch, down in cfg.stages:
            stages.append(nn.Sequential(nn.Conv2d(prev, ch, 3, stride=2 if down else 1, padding=1),
                                        act()))
            prev = ch
        self.stages = nn.ModuleList(stages)
        head = []
        for _ in range(cfg.head_deconvs):
            head += [nn.ConvTranspose2d(prev, cfg.head_channels, 4, stride=2, padding=1), act()]
            prev = cfg.head_channels
        head.append(nn.Conv2d(prev, cfg.out_joints, 1))
        self.head = nn.Sequential(*head)

    @property
    def locations(self) -> List[str]:
        return self.cfg.locations

    def segments(self):
        yield "input", self.stem
        for i, stage in enumerate(self.stages):
            yield f"stage-{i + 1}", stage
        yield "pre-head", self.head

    def forward(self, x: torch.Tensor, mix_at: Optional[str] = None,
                mix_fn: Optional[Callable[[torch.Tensor], torch.Tensor]] = None) -> torch.Tensor:
        if mix_at is not None and mix_at not in self.locations:
            raise ValueError(f"unknown mixing location {mix_at!r}; expected one of {self.locations}")
        for name, seg in self.segments():
            if name == mix_at:
                x = mix_fn(x)
            x = seg(x)
        return x


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


class EmptyMaskWarning(UserWarning):
    pass


def _masked_mse(pred: torch.Tensor, target: torch.Tensor, joint_mask) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    per_joint = ((pred - target) ** 2).mean(dim=(-2, -1))
    if joint_mask is None:
        return per_joint.mean()
    mask = torch.as_tensor(joint_mask, dtype=per_joint.dtype, device=per_joint.device)
    mask = mask.expand_as(per_joint)
    n = mask.sum()
    if n == 0:
        warnings.warn("every joint is masked out; loss is zero", EmptyMaskWarning, stacklevel=3)
        return (per_joint * 0.0).sum()
    return (per_joint * mask).sum() / n


def supervised_loss(pred: torch.Tensor, target: torch.Tensor, joint_mask=None) -> torch.Tensor:
    """Mean squared error over the cells of unmasked joints. Shapes (N, K, H, W); mask (N, K)."""
    return _masked_mse(pred, target, joint_mask)


def consistency_loss(student_pred: torch.Tensor, pseudo: torch.Tensor, valid_mask=None) -> torch.Tensor:
    """Same MSE as ``supervised_loss`` against teacher heatmaps, which never receive gradient."""
    return _masked_mse(student_pred, pseudo.detach(), valid_mask)


@dataclass
class LossBundle:
    l_s: float
    l_u: float
    l_m: float
    lambda_u: float
    lambda_m: float
    total: float
    tensor: Optional[torch.Tensor] = field(default=None, repr=False, compare=False)

    def as_row(self) -> dict:
        return {"l_s": self.l_s, "l_u": self.l_u, "l_m": self.l_m, "l_total": self.total}


def total_loss(l_s, l_u=0.0, l_m=0.0, lambda_u: float = 1.0, lambda_m: float = 1.0) -> LossBundle:
    """Supervised loss plus weighted consistency and mixup terms.

    Composition runs in float64 so ``bundle.total`` is bit-identical to the
    differentiable scalar handed to the optimizer.
    """
    if lambda_u < 0 or lambda_m < 0:
        raise ValueError("loss weights must be non-negative")

    def as_t(v):
        return v.double() if torch.is_tensor(v) else torch.tensor(float(v), dtype=torch.float64)

    ts, tu, tm = as_t(l_s), as_t(l_u), as_t(l_m)
    tot = ts + lambda_u * tu + lambda_m * tm
    return LossBundle(ts.item(), tu.item(), tm.item(), float(lambda_u), float(lambda_m),
                      tot.item(), tot)
