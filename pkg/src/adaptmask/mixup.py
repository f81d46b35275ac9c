"""Image- and feature-level mixup and the alpha-weighted consistency loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import torch

# Late locations degrade badly, so the random mode leaves them out unless asked.
RANDOM_LOCATIONS = ("input", "stage-1", "stage-3")
LATE_LOCATIONS = ("pre-head",)


@dataclass
class MixupConfig:
    enabled: bool = True
    beta_a: float = 0.75
    location: str = "stage-3"
    lambda_m: float = 1.0
    allow_late_stages: bool = False


@dataclass
class MixupSpec:
    """Mixing coefficients (one per pair), the partner permutation and where to mix."""

    alpha: Union[float, np.ndarray]
    partner: np.ndarray
    location: str = "input"


def _alpha_like(alpha, ref):
    if torch.is_tensor(ref):
        a = torch.as_tensor(alpha, dtype=ref.dtype, device=ref.device)
    else:
        a = np.asarray(alpha, dtype=np.result_type(ref, np.float64))
    if a.ndim == 1:
        if a.shape[0] != ref.shape[0]:
            raise ValueError(f"{a.shape[0]} mixing coefficients for a batch of {ref.shape[0]}")
        a = a.reshape((-1,) + (1,) * (ref.ndim - 1))
    elif a.ndim > 1:
        raise ValueError("alpha must be a scalar or one value per batch row")
    return a


def mix_tensors(a, b, alpha):
    """alpha * a + (1 - alpha) * b for arrays or tensors; per-row alphas broadcast over the batch axis."""
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    al = np.asarray(alpha.detach().cpu() if torch.is_tensor(alpha) else alpha, dtype=np.float64)
    if np.any(al < 0) or np.any(al > 1):
        raise ValueError("alpha must lie in [0, 1]")
    w = _alpha_like(alpha, a)
    return w * a + (1 - w) * b


def sample_mixup_spec(batch_size: int, cfg: MixupConfig, rng: np.random.Generator,
                      locations: Sequence[str]) -> MixupSpec:
    partner = rng.permutation(batch_size)
    alpha = rng.beta(cfg.beta_a, cfg.beta_a, size=batch_size)
    if cfg.location == "random":
        pool = list(RANDOM_LOCATIONS) + (list(LATE_LOCATIONS) if cfg.allow_late_stages else [])
        pool = [loc for loc in pool if loc in locations]
        location = pool[int(rng.integers(len(pool)))]
    else:
        if cfg.location not in locations:
            raise ValueError(f"unknown mixing location {cfg.location!r}; expected one of {list(locations)}")
        location = cfg.location
    return MixupSpec(alpha, partner, location)


def forward_with_mixup(model, batch: torch.Tensor, spec: MixupSpec) -> torch.Tensor:
    """Run ``model`` up to ``spec.location``, mix each row with its partner row, then finish."""
    if spec.location not in model.locations:
        raise ValueError(f"unknown mixing location {spec.location!r}; expected one of {model.locations}")
    partner = torch.as_tensor(np.asarray(spec.partner), dtype=torch.long)

    def mix(x):
        return mix_tensors(x, x[partner], spec.alpha)

    return model(batch, mix_at=spec.location, mix_fn=mix)


def mixed_consistency_loss(pred_mixed: torch.Tensor, pseudo_i: torch.Tensor,
                           pseudo_j: torch.Tensor, alpha) -> torch.Tensor:
    """alpha * MSE(pred, H_i) + (1 - alpha) * MSE(pred, H_j), averaged over batch, joints and cells.

    The pseudo heatmaps are treated as constants.
    """
    if pred_mixed.shape != pseudo_i.shape or pred_mixed.shape != pseudo_j.shape:
        raise ValueError(f"shape mismatch: {tuple(pred_mixed.shape)}, "
                         f"{tuple(pseudo_i.shape)}, {tuple(pseudo_j.shape)}")
    dims = tuple(range(1, pred_mixed.ndim))
    err_i = ((pred_mixed - pseudo_i.detach()) ** 2).mean(dim=dims)
    err_j = ((pred_mixed - pseudo_j.detach()) ** 2).mean(dim=dims)
    a = torch.as_tensor(alpha, dtype=pred_mixed.dtype)
    return (a * err_i + (1 - a) * err_j).mean()
