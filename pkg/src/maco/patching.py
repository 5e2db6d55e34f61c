"""Image partitioning, random patch masking, and the low-resolution input path.

A square image is cut into a regular grid of non-overlapping patches
(row-major order).  During pretraining a random subset of grid positions is
kept ("sampled") and the rest are masked; the binary masked position map
records the outcome (1 = sampled, 0 = masked) and later feeds the
correlation-weighting head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass(frozen=True)
class MaskPlan:
    """Outcome of randomly sampling patches for one instance."""

    n_total: int
    sampled: np.ndarray   # indices kept, in sampling order
    masked: np.ndarray    # indices dropped
    position_map: np.ndarray  # length n_total, 1.0 at sampled slots

    @property
    def n_sampled(self) -> int:
        return len(self.sampled)

    @property
    def n_masked(self) -> int:
        return len(self.masked)


@dataclass(frozen=True)
class PatchGrid:
    """Row-major patch decomposition of a square image."""

    patch_size: int
    grid_side: int
    patches: np.ndarray  # (n_total, patch_size**2)

    @property
    def n_total(self) -> int:
        return self.grid_side**2


def partition(image: np.ndarray, patch_size: int) -> PatchGrid:
    """Cut a square image into non-overlapping patch_size x patch_size tiles."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise DimensionError(f"partition expects a square image, got shape {image.shape}")
    side = image.shape[0]
    if side % patch_size != 0:
        raise DimensionError(f"image side {side} is not divisible by patch size {patch_size}")
    g = side // patch_size
    tiles = image.reshape(g, patch_size, g, patch_size).transpose(0, 2, 1, 3)
    return PatchGrid(patch_size=patch_size, grid_side=g, patches=tiles.reshape(g * g, patch_size**2))


def reassemble(grid: PatchGrid) -> np.ndarray:
    """Inverse of :func:`partition`."""
    g, p = grid.grid_side, grid.patch_size
    tiles = grid.patches.reshape(g, g, p, p).transpose(0, 2, 1, 3)
    return tiles.reshape(g * p, g * p)


def partition_batch(images: np.ndarray, patch_size: int) -> np.ndarray:
    """Vectorized partition of a (B, H, H) stack -> (B, n_total, patch_size**2)."""
    b, side, side2 = images.shape
    if side != side2 or side % patch_size != 0:
        raise DimensionError(f"partition_batch: bad shapes {images.shape} for patch {patch_size}")
    g = side // patch_size
    tiles = images.reshape(b, g, patch_size, g, patch_size).transpose(0, 1, 3, 2, 4)
    return tiles.reshape(b, g * g, patch_size**2)


def sample_mask(n_total: int, mask_ratio: float, rng: np.random.Generator) -> MaskPlan:
    """Uniformly sample round(n*(1-ratio)) patch positions without replacement."""
    if not 0.0 < mask_ratio < 1.0:
        raise ParameterError(f"mask_ratio must lie in (0, 1), got {mask_ratio}")
    n_keep = int(round(n_total * (1.0 - mask_ratio)))
    if n_keep < 1:
        raise ParameterError(f"mask_ratio {mask_ratio} leaves no sampled patches for n={n_total}")
    perm = rng.permutation(n_total)
    sampled = perm[:n_keep]
    masked = np.sort(perm[n_keep:])
    position_map = np.zeros(n_total)
    position_map[sampled] = 1.0
    return MaskPlan(n_total=n_total, sampled=sampled, masked=masked, position_map=position_map)


def downsample(image: np.ndarray, ratio: int) -> np.ndarray:
    """Block-mean pooling by an integer factor (ratio=1 is the identity)."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[-2:]
    if h % ratio != 0 or w % ratio != 0:
        raise DimensionError(f"image {h}x{w} is not divisible by downsample ratio {ratio}")
    if ratio == 1:
        return image.copy()
    lead = image.shape[:-2]
    blocks = image.reshape(*lead, h // ratio, ratio, w // ratio, ratio)
    return blocks.mean(axis=(-3, -1))


def select_patches(grid: PatchGrid, plan: MaskPlan) -> tuple[np.ndarray, np.ndarray]:
    """Pick the sampled patch vectors, in plan order, plus their grid indices."""
    if plan.n_total != grid.n_total:
        raise DimensionError(
            f"mask plan for {plan.n_total} patches does not match grid with {grid.n_total}"
        )
    return grid.patches[plan.sampled], plan.sampled.copy()


def scatter_rows(rows: np.ndarray, indices: np.ndarray, n_total: int) -> np.ndarray:
    """Place rows at their grid indices; unsampled slots stay zero."""
    out = np.zeros((n_total, rows.shape[1]))
    out[indices] = rows
    return out
