"""Training configuration and its flat ``key = value`` file format.

Files use dotted section headers, e.g.::

    [train]
    epochs = 30
    [aug.weak]
    rotation_max = 15

which flatten to ``train.epochs`` and ``aug.weak.rotation_max``.
"""
from __future__ import annotations

import ast
import configparser
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .geometry import AugConfig
from .masking import MaskPolicy
from .mixup import MixupConfig
from .model import BackboneConfig

METHODS = ("supervised", "pseudo-pose", "single", "adaptive", "adaptive+mixup")
MASK_MODES = ("auto", "none", "random", "adaptive")


@dataclass
class DataConfig:
    source: str = "synthetic"  # synthetic | synthetic-dir | coco
    dir: Optional[str] = None
    coco_annotations: Optional[str] = None
    coco_images: Optional[str] = None
    train_count: int = 550
    val_count: int = 200
    synth_seed: int = 0
    occlusion_frac: float = 0.15
    low_contrast_frac: float = 0.15
    labels: int = 50
    split_seed: int = 0
    input_size: Tuple[int, int] = (64, 64)
    sigma: float = 1.0
    protocol: str = "pck"


@dataclass
class TrainConfig:
    method: str = "adaptive+mixup"
    epochs: int = 30
    batch_labeled: int = 16
    batch_unlabeled: int = 16
    lr_initial: float = 1e-3
    lr_drops: List[Tuple[int, float]] = field(default_factory=lambda: [(20, 1e-4), (25, 1e-5)])
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 1
    threads: int = 0
    lambda_u: float = 1.0
    warmup_epochs: float = 2.0
    pseudo_threshold: float = 0.0  # teacher joints below this peak are left out of L_u
    pseudo_warmup_frac: float = 0.5
    mask_mode: str = "auto"
    select_metric: str = "pck_total"
    data: DataConfig = field(default_factory=DataConfig)
    model: BackboneConfig = field(default_factory=BackboneConfig)
    aug: AugConfig = field(default_factory=AugConfig)
    mask: MaskPolicy = field(default_factory=MaskPolicy)
    mixup: MixupConfig = field(default_factory=MixupConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"unknown mask mode {self.mask_mode!r}")
        self.lr_drops = [(int(e), float(lr)) for e, lr in self.lr_drops]
        epochs = [e for e, _ in self.lr_drops]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("lr_drops epochs must be strictly increasing")

    # which branches run
    @property
    def uses_unlabeled(self) -> bool:
        return self.method != "supervised"

    @property
    def masking(self) -> str:
        if self.mask_mode != "auto":
            return self.mask_mode
        return {"single": "random", "adaptive": "adaptive",
                "adaptive+mixup": "adaptive"}.get(self.method, "none")

    @property
    def uses_mixup(self) -> bool:
        return self.method == "adaptive+mixup" and self.mixup.enabled

    def lr_at(self, epoch: int) -> float:
        """Learning rate for the 0-based ``epoch``."""
        lr = self.lr_initial
        for e, value in self.lr_drops:
            if epoch >= e:
                lr = value
        return lr


# dotted key -> (attribute path on TrainConfig)
_TOP = {f.name for f in fields(TrainConfig)} - {"data", "model", "aug", "mask", "mixup",
                                                   "lambda_u", "warmup_epochs", "pseudo_threshold",
                                                   "mask_mode"}
KEYMAP: Dict[str, Tuple[str, ...]] = {f"train.{k}": (k,) for k in sorted(_TOP)}
KEYMAP.update({
    "loss.lambda_u": ("lambda_u",),
    "loss.warmup_epochs": ("warmup_epochs",),
    "loss.pseudo_threshold": ("pseudo_threshold",),
    "mask.mode": ("mask_mode",),
    "aug.weak.rotation_max": ("aug", "weak_rotation_max"),
    "aug.weak.scale_range": ("aug", "weak_scale_range"),
    "aug.strong.rotation_max": ("aug", "strong_rotation_max"),
    "aug.strong.scale_range": ("aug", "strong_scale_range"),
    "aug.strong.translate_frac": ("aug", "strong_translate_frac"),
})
for _sec, _cls in (("data", DataConfig), ("model", BackboneConfig), ("mask", MaskPolicy),
                   ("mixup", MixupConfig)):
    for _f in fields(_cls):
        KEYMAP[f"{_sec}.{_f.name}"] = (_sec, _f.name)


def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def to_flat(cfg: TrainConfig) -> Dict[str, object]:
    out = {}
    for key, path in KEYMAP.items():
        obj = cfg
        for part in path:
            obj = getattr(obj, part)
        out[key] = obj
    return json.loads(json.dumps(out))


def from_flat(flat: Dict[str, object], base: Optional[TrainConfig] = None) -> TrainConfig:
    """Build a config from dotted keys, starting from ``base`` (defaults if omitted)."""
    raw = to_flat(base) if base is not None else to_flat(TrainConfig())
    for key, value in flat.items():
        if key not in KEYMAP:
            raise KeyError(f"unknown config key {key!r}")
        raw[key] = value
    top, sections = {}, {"data": {}, "model": {}, "aug": {}, "mask": {}, "mixup": {}}
    for key, value in raw.items():
        path = KEYMAP[key]
        if len(path) == 1:
            top[path[0]] = value
        else:
            sections[path[0]][path[1]] = value
    data = sections["data"]
    if data.get("input_size") is not None:
        data["input_size"] = tuple(data["input_size"])
    for k in ("weak_scale_range", "strong_scale_range"):
        sections["aug"][k] = tuple(sections["aug"][k])
    top["betas"] = tuple(top["betas"])
    return TrainConfig(data=DataConfig(**data), model=BackboneConfig(**sections["model"]),
                       aug=AugConfig(**sections["aug"]), mask=MaskPolicy(**sections["mask"]),
                       mixup=MixupConfig(**sections["mixup"]), **top)


def load_config(path, overrides: Optional[Dict[str, object]] = None) -> TrainConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[f"{section}.{key}"] = parse_value(value)
    flat.update(overrides or {})
    return from_flat(flat)


def write_config(cfg: TrainConfig, path) -> Path:
    sections: Dict[str, Dict[str, object]] = {}
    for key, value in to_flat(cfg).items():
        section, name = key.rsplit(".", 1)
        sections.setdefault(section, {})[name] = value
    lines = []
    for section, items in sections.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {json.dumps(v)}" for k, v in items.items()]
        lines.append("")
    path = Path(path)
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


def config_dict(cfg: TrainConfig) -> dict:
    return json.loads(json.dumps(asdict(cfg)))
