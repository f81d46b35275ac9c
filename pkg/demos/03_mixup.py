"""Image mixup and feature mixup through the backbone.

Mixing at the input is ordinary image mixup. Mixing at a later stage blends
hidden activations instead. Either way the loss weights the two teacher
heatmaps with the same alpha used for the blend.
"""
import numpy as np
import torch

from adaptmask import (MixupConfig, MixupSpec, PoseNet, BackboneConfig, forward_with_mixup,
                       mix_tensors, mixed_consistency_loss)
from adaptmask.mixup import sample_mixup_spec

torch.manual_seed(0)
model = PoseNet(BackboneConfig())
x = torch.rand(4, 3, 64, 64)
rng = np.random.default_rng(0)

print("locations:", model.locations)
print("mix 2 and 10 at alpha 0.3:", mix_tensors(np.array(2.0), np.array(10.0), 0.3))

spec = sample_mixup_spec(4, MixupConfig(), rng, model.locations)
print("alpha", spec.alpha.round(3), "partner", spec.partner, "at", spec.location)

with torch.no_grad():
    teacher = model(x)
    for loc in ("input", "stage-1", "stage-3"):
        s = MixupSpec(spec.alpha, spec.partner, loc)
        pred = forward_with_mixup(model, x, s)
        loss = mixed_consistency_loss(pred, teacher, teacher[torch.as_tensor(spec.partner)], spec.alpha)
        print(f"{loc:>8}: L_m = {loss.item():.3e}")

    # at the input, feature mixup is exactly image mixup
    s = MixupSpec(spec.alpha, spec.partner, "input")
    a = forward_with_mixup(model, x, s)
    b = model(mix_tensors(x, x[torch.as_tensor(spec.partner)], spec.alpha))
    print("input mixing vs image mixup, max diff:", (a - b).abs().max().item())
