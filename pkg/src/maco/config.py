"""Run configuration: one dataclass covering geometry, model, loss, optimizer,
schedule, corpus, and paths, with every downstream constraint re-validated on
load so a bad config fails before any work starts."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    # geometry: the image side/patch size describe the stored (high-res)
    # image; the encoder consumes the 1/ratio downsampled version, so its
    # patches have side patch_size/ratio on the same (side/patch)^2 grid
    image_side: int = 64
    patch_size: int = 8
    downsample_ratio: int = 2

    # model (desk scale; full scale would be 224/16 with width 768)
    width: int = 64
    image_depth: int = 2
    text_depth: int = 2
    decoder_depth: int = 1
    heads: int = 4
    proj_dim: int = 64
    max_text_len: int = 32
    learned_positions: bool = False
    projection_bias: bool = False
    image_pooling: str = "mean"

    # objective
    mask_ratio: float = 0.75
    lam: float = 0.9
    tau_init: float = 0.03
    tau_w: float = 0.02
    use_correlation_weighting: bool = True
    symmetrize_detached_term: bool = True
    per_patch_standardize: bool = False
    grounding_normalize_rows: bool = False

    # optimizer and schedule
    lr: float = 4.5e-4
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.95
    batch_size: int = 64
    epochs: int = 30
    warmup_frac: float = 0.1

    # corpus
    n_train: int = 2048
    n_val: int = 256
    n_test: int = 256
    objects_min: int = 1
    objects_max: int = 2
    noise_sigma: float = 0.05
    allowed_regions: list[str] | None = None

    # bookkeeping
    seed: int = 42
    data_dir: str = "data"
    out_dir: str = "runs"

    # -- derived geometry -----------------------------------------------------

    @property
    def grid_side(self) -> int:
        return self.image_side // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_side**2

    @property
    def lr_patch_size(self) -> int:
        return self.patch_size // self.downsample_ratio

    @property
    def n_sampled(self) -> int:
        return int(round(self.n_patches * (1.0 - self.mask_ratio)))

    def validate(self) -> "RunConfig":
        def need(cond: bool, message: str) -> None:
            if not cond:
                raise ConfigError(message)

        need(self.image_side > 0, f"image_side must be positive, got {self.image_side}")
        need(self.patch_size > 0, f"patch_size must be positive, got {self.patch_size}")
        need(
            self.image_side % self.patch_size == 0,
            f"image_side {self.image_side} not divisible by patch_size {self.patch_size}",
        )
        need(self.downsample_ratio >= 1, f"downsample_ratio must be >= 1, got {self.downsample_ratio}")
        need(
            self.patch_size % self.downsample_ratio == 0,
            f"patch_size {self.patch_size} not divisible by downsample_ratio {self.downsample_ratio}",
        )
        need(self.width % self.heads == 0, f"width {self.width} not divisible by heads {self.heads}")
        need(0.0 < self.mask_ratio < 1.0, f"mask_ratio must lie in (0, 1), got {self.mask_ratio}")
        need(
            self.n_sampled >= 1,
            f"mask_ratio {self.mask_ratio} leaves no sampled patches on a {self.n_patches}-patch grid",
        )
        need(0.0 <= self.lam <= 1.0, f"lam must lie in [0, 1], got {self.lam}")
        need(self.tau_init > 0.0, f"tau_init must be positive, got {self.tau_init}")
        need(self.tau_w > 0.0, f"tau_w must be positive, got {self.tau_w}")
        need(self.lr >= 0.0, f"lr must be >= 0, got {self.lr}")
        need(self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}")
        need(self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}")
        need(0.0 <= self.warmup_frac < 1.0, f"warmup_frac must lie in [0, 1), got {self.warmup_frac}")
        need(self.max_text_len >= 2, f"max_text_len must be >= 2, got {self.max_text_len}")
        need(
            self.image_pooling in ("mean", "max"),
            f"image_pooling must be 'mean' or 'max', got '{self.image_pooling}'",
        )
        need(self.proj_dim > 0, f"proj_dim must be positive, got {self.proj_dim}")
        for name in ("n_train", "n_val", "n_test"):
            need(getattr(self, name) >= 1, f"{name} must be >= 1, got {getattr(self, name)}")
        need(
            1 <= self.objects_min <= self.objects_max,
            f"objects_min/objects_max range [{self.objects_min}, {self.objects_max}] is invalid",
        )
        return self

    # -- serialization ----------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        known = {f.name for f in fields(RunConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = RunConfig(**d)
        return cfg.validate()

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError("config JSON must be an object")
        return RunConfig.from_dict(d)

    @staticmethod
    def load(path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return RunConfig.from_json(path.read_text())
