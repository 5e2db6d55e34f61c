"""Procedural paired image-report corpus with exact labels and boxes.

Each sample is a square grayscale image containing one or two bright shapes
(disc, square, ring, cross) placed in named cells of a 3x3 grid, over a dim
noisy background.  The report states, one sentence per object, what was
placed where; boxes tightly bound the object pixels.  Everything is a pure
function of (spec, seed, index), so regeneration is bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import Box
from .errors import InputError, SceneSpecError
from .pgm import read_pgm, write_pgm8
from .text import Vocabulary, split_words

CLASSES = ("disc", "square", "ring", "cross")
REGION_ROWS = ("upper", "middle", "lower")
REGION_COLS = ("left", "center", "right")
REGIONS = tuple(f"{r} {c}" for r in REGION_ROWS for c in REGION_COLS)

IMAGE_MEAN = 0.4978
IMAGE_STD = 0.2449


@dataclass(frozen=True)
class SceneSpec:
    image_side: int = 64
    classes: tuple[str, ...] = CLASSES
    regions: tuple[str, ...] = REGIONS
    min_objects: int = 1
    max_objects: int = 2
    intensity_range: tuple[float, float] = (0.65, 0.95)
    background_level: float = 0.15
    noise_sigma: float = 0.05

    def validate(self) -> None:
        if self.image_side < 36:
            raise SceneSpecError(
                f"image side {self.image_side} too small to place objects in a 3x3 grid"
            )
        if self.max_objects > len(self.regions):
            raise SceneSpecError(
                f"{self.max_objects} objects per image exceed {len(self.regions)} grid regions"
            )
        if not 1 <= self.min_objects <= self.max_objects:
            raise SceneSpecError(
                f"bad objects-per-image range [{self.min_objects}, {self.max_objects}]"
            )
        unknown = set(self.regions) - set(REGIONS)
        if unknown:
            raise SceneSpecError(f"unknown region names: {sorted(unknown)}")
        if set(self.classes) - set(CLASSES):
            raise SceneSpecError(f"unknown classes: {sorted(set(self.classes) - set(CLASSES))}")


@dataclass(frozen=True)
class PairedSample:
    image: np.ndarray           # (H, W) floats in [0, 1]
    report: str
    labels: np.ndarray          # multi-hot over CLASSES
    boxes: list[Box] = field(default_factory=list)


def _region_bounds(side: int, region: str) -> tuple[int, int, int, int]:
    """Pixel bounds (r0, r1, c0, c1) of a named cell in the 3x3 grid."""
    edges = np.linspace(0, side, 4).astype(int)
    row = REGION_ROWS.index(region.split()[0])
    col = REGION_COLS.index(region.split()[1])
    return edges[row], edges[row + 1], edges[col], edges[col + 1]


def _draw_shape(cls: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean stamp of the shape on a size x size canvas."""
    yy, xx = np.mgrid[0:size, 0:size]
    cy = cx = (size - 1) / 2.0
    r = np.hypot(yy - cy, xx - cx)
    if cls == "disc":
        return r <= size / 2.0 - 0.5
    if cls == "ring":
        outer = size / 2.0 - 0.5
        return (r <= outer) & (r >= outer - max(2.0, size / 4.0))
    if cls == "square":
        return np.ones((size, size), dtype=bool)
    if cls == "cross":
        thick = max(2, size // 4)
        lo = (size - thick) // 2
        stamp = np.zeros((size, size), dtype=bool)
        stamp[lo : lo + thick, :] = True
        stamp[:, lo : lo + thick] = True
        return stamp
    raise SceneSpecError(f"unknown object class '{cls}'")


def generate_sample(spec: SceneSpec, rng: np.random.Generator) -> PairedSample:
    spec.validate()
    side = spec.image_side
    image = np.clip(
        spec.background_level + rng.normal(0.0, spec.noise_sigma, (side, side)), 0.0, 1.0
    )
    n_objects = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    regions = [spec.regions[i] for i in rng.choice(len(spec.regions), n_objects, replace=False)]
    classes = [spec.classes[i] for i in rng.choice(len(spec.classes), n_objects, replace=False)]

    labels = np.zeros(len(CLASSES))
    boxes: list[Box] = []
    sentences: list[str] = []
    for cls, region in zip(classes, regions):
        r0, r1, c0, c1 = _region_bounds(side, region)
        cell = min(r1 - r0, c1 - c0)
        size = int(rng.integers(max(7, cell // 3), cell - 3))
        stamp = _draw_shape(cls, size, rng)
        top = int(rng.integers(r0 + 1, r1 - size))
        left = int(rng.integers(c0 + 1, c1 - size))
        intensity = float(rng.uniform(*spec.intensity_range))
        region_pixels = image[top : top + size, left : left + size]
        region_pixels[stamp] = intensity
        rows, cols = np.nonzero(stamp)
        sentence = f"There is a {cls} in the {region} region."
        boxes.append(
            Box(
                x=left + int(cols.min()),
                y=top + int(rows.min()),
                width=int(cols.max() - cols.min()) + 1,
                height=int(rows.max() - rows.min()) + 1,
                label=cls,
                phrase=sentence,
            )
        )
        labels[CLASSES.index(cls)] = 1.0
        sentences.append(sentence)
    return PairedSample(image=image, report=" ".join(sentences), labels=labels, boxes=boxes)


def generate_corpus(spec: SceneSpec, n: int, seed: int) -> list[PairedSample]:
    """n samples with independent per-index RNG streams (order-independent)."""
    if n < 1:
        raise SceneSpecError(f"corpus size must be >= 1, got {n}")
    return [
        generate_sample(spec, np.random.default_rng(np.random.SeedSequence([seed, i])))
        for i in range(n)
    ]


# -- augmentation --------------------------------------------------------------


def _affine_resample(image: np.ndarray, angle_deg: float, scale: float) -> np.ndarray:
    """Rotate+scale about the center, bilinear sampling with replicated edges."""
    side = image.shape[0]
    center = (side - 1) / 2.0
    rr, cc = np.mgrid[0:side, 0:side].astype(np.float64)
    # inverse map: output pixel -> source location
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    dy, dx = rr - center, cc - center
    src_r = (cos_t * dy - sin_t * dx) / scale + center
    src_c = (sin_t * dy + cos_t * dx) / scale + center
    src_r = np.clip(src_r, 0.0, side - 1)
    src_c = np.clip(src_c, 0.0, side - 1)
    r0 = np.minimum(np.floor(src_r).astype(int), side - 2)
    c0 = np.minimum(np.floor(src_c).astype(int), side - 2)
    fr, fc = src_r - r0, src_c - c0
    # a + f*(b-a) with exact endpoints, so the identity transform is exact
    top = np.where(fc == 1.0, image[r0, c0 + 1],
                   image[r0, c0] + fc * (image[r0, c0 + 1] - image[r0, c0]))
    bot = np.where(fc == 1.0, image[r0 + 1, c0 + 1],
                   image[r0 + 1, c0] + fc * (image[r0 + 1, c0 + 1] - image[r0 + 1, c0]))
    return np.where(fr == 1.0, bot, top + fr * (bot - top))


def augment_image(
    image: np.ndarray,
    rng: np.random.Generator,
    max_degrees: float = 20.0,
    scale_range: tuple[float, float] = (0.8, 1.2),
    mean: float = IMAGE_MEAN,
    std: float = IMAGE_STD,
) -> np.ndarray:
    """Random flip/rotation/scale, then (x - mean) / std normalization."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise InputError(f"augment_image expects a square image, got {image.shape}")
    if rng.random() < 0.5:
        image = image[:, ::-1]
    angle = rng.uniform(-max_degrees, max_degrees)
    scale = rng.uniform(*scale_range)
    out = _affine_resample(image, angle, scale)
    return (out - mean) / std


def normalize_image(image: np.ndarray, mean: float = IMAGE_MEAN, std: float = IMAGE_STD) -> np.ndarray:
    return (np.asarray(image, dtype=np.float64) - mean) / std


def augment_text(report: str, rng: np.random.Generator) -> str:
    """Keep a random nonempty subset of sentences, in shuffled order."""
    sentences = [s.strip() + "." for s in report.split(".") if s.strip()]
    if len(sentences) <= 1:
        return report.strip()
    k = int(rng.integers(1, len(sentences) + 1))
    chosen = rng.choice(len(sentences), size=k, replace=False)
    return " ".join(sentences[i] for i in chosen)


# -- vocabulary -----------------------------------------------------------------


def build_vocabulary() -> Vocabulary:
    """Closed vocabulary of the report grammar plus the zero-shot prompt words."""
    words: list[str] = []
    for sentence in (
        "There is a thing in the upper left region.",
        "there is no thing",
    ):
        words.extend(split_words(sentence))
    words.extend(CLASSES)
    words.extend(REGION_ROWS)
    words.extend(REGION_COLS)
    seen: list[str] = []
    for w in words:
        if w not in seen and w != "thing":
            seen.append(w)
    return Vocabulary(seen)


# -- on-disk corpus --------------------------------------------------------------

_MANIFEST_FIELDS = {"image", "report", "labels", "boxes"}


def save_corpus(samples: list[PairedSample], out_dir, split: str) -> Path:
    """Write per-sample PGMs plus a JSON-lines manifest; returns manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / f"{split}.jsonl"
    with open(manifest, "w") as f:
        for i, s in enumerate(samples):
            rel = f"images/{split}_{i:05d}.pgm"
            write_pgm8(out_dir / rel, s.image)
            row = {
                "image": rel,
                "report": s.report,
                "labels": [int(v) for v in s.labels],
                "boxes": [b.to_dict() for b in s.boxes],
            }
            f.write(json.dumps(row) + "\n")
    return manifest


def load_corpus(manifest_path) -> list[PairedSample]:
    """Load and schema-check a manifest written by :func:`save_corpus`."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise InputError(f"manifest not found: {manifest_path}")
    samples: list[PairedSample] = []
    with open(manifest_path) as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            missing = _MANIFEST_FIELDS - set(row)
            if missing:
                raise InputError(f"{manifest_path}:{line_no}: missing fields {sorted(missing)}")
            labels = np.asarray(row["labels"], dtype=np.float64)
            if labels.shape != (len(CLASSES),):
                raise InputError(f"{manifest_path}:{line_no}: labels must have {len(CLASSES)} entries")
            image = read_pgm(manifest_path.parent / row["image"])
            boxes = [Box.from_dict(b) for b in row["boxes"]]
            for b in boxes:
                b.validate(*image.shape)
            samples.append(
                PairedSample(image=image, report=str(row["report"]), labels=labels, boxes=boxes)
            )
    if not samples:
        raise InputError(f"{manifest_path}: empty manifest")
    return samples
