"""Semi-supervised 2D pose estimation with adaptive keypoint masking and mixup consistency."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import TrainConfig, from_flat, load_config, to_flat, write_config
from .data import (IngestionError, SampleRecord, SplitSpec, generate_stick_figures,
                   load_coco_keypoints, load_synthetic, make_split, make_synthetic_dataset,
                   save_synthetic)
from .geometry import (AffineAug, AugConfig, compose, invert, relative_transform, sample_strong,
                       sample_weak, warp_heatmaps, warp_image)
from .heatmap import (Heatmap, HeatmapStack, KeypointSet, Visibility, decode_peaks, responsiveness,
                      synthesize_targets)
from .masking import (MaskBudget, MaskPolicy, allocate_mask_count, apply_keypoint_masks,
                      relative_response)
from .metrics import OksParams, PckParams, UndefinedMetricError, average_precision, oks, pck
from .mixup import MixupConfig, MixupSpec, forward_with_mixup, mix_tensors, mixed_consistency_loss
from .model import (BackboneConfig, EmptyMaskWarning, LossBundle, PoseNet, consistency_loss,
                    micro_config, supervised_loss, total_loss)
from .train import evaluate, fit, read_metrics, train_step

__version__ = "0.1.0"


def emit_plots(run_dirs, out_dir):
    """Chart writer; imported lazily so matplotlib loads only when plotting."""
    from .plots import emit_plots as _emit

    return _emit(run_dirs, out_dir)
