"""Zero-shot inference: phrase-grounding score maps, prompt-based
classification, the importance weight-map readout, and a linear probe on
frozen encoder features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import objectives, tensor as T
from .config import RunConfig
from .datagen import CLASSES, PairedSample, normalize_image
from .errors import InputError, MetricError, ParameterError
from .metrics import auc
from .model import MacoModel
from .optim import SGDMomentum
from .patching import downsample, partition_batch
from .tensor import Tensor, no_grad
from .text import Vocabulary, tokenize, tokenize_batch


@dataclass(frozen=True)
class GroundingMap:
    """Per-pixel phrase-match scores at the input image's resolution."""

    scores: np.ndarray
    phrase: str
    tau_w: float
    grid_side: int


@dataclass(frozen=True)
class WeightMap:
    """Softmax-normalized importance head weights on the patch grid."""

    weights: np.ndarray  # (grid_side, grid_side), sums to 1
    tau_w: float


def encode_full_images(model: MacoModel, cfg: RunConfig, images01: np.ndarray) -> np.ndarray:
    """Encode unmasked images (every patch sampled) -> (B, N, C) features."""
    images01 = np.asarray(images01, dtype=np.float64)
    if images01.ndim == 2:
        images01 = images01[None]
    normalized = normalize_image(images01)
    lr = downsample(normalized, cfg.downsample_ratio)
    patches = partition_batch(lr, cfg.lr_patch_size)
    b = patches.shape[0]
    positions = np.broadcast_to(np.arange(cfg.n_patches), (b, cfg.n_patches))
    with no_grad():
        return model.image_encoder(patches, positions).data


def normalized_head_weights(model: MacoModel, tau_w: float) -> np.ndarray:
    if tau_w <= 0.0:
        raise ParameterError(f"tau_w must be positive, got {tau_w}")
    w = model.importance.weight.data / tau_w
    w = w - w.max()
    e = np.exp(w)
    return e / e.sum()


def export_weight_map(model: MacoModel, cfg: RunConfig, tau_w: float | None = None) -> WeightMap:
    tau_w = cfg.tau_w if tau_w is None else tau_w
    what = normalized_head_weights(model, tau_w)
    return WeightMap(weights=what.reshape(cfg.grid_side, cfg.grid_side), tau_w=tau_w)


def grounding_map(
    image01: np.ndarray,
    phrase: str,
    model: MacoModel,
    vocab: Vocabulary,
    cfg: RunConfig,
    tau_w: float | None = None,
) -> GroundingMap:
    """Build the phrase-grounding score map for one image.

    The softmax-normalized head weights scale the per-patch features of the
    full (unmasked) image; their dot products with the text [cls] vector give
    one score per patch, upsampled bilinearly to the image's resolution.
    """
    tau_w = cfg.tau_w if tau_w is None else tau_w
    image01 = np.asarray(image01, dtype=np.float64)
    if image01.ndim != 2:
        raise InputError(f"grounding_map expects one grayscale image, got shape {image01.shape}")
    what = normalized_head_weights(model, tau_w)

    patch_features = encode_full_images(model, cfg, image01)[0]  # (N, C)
    if cfg.grounding_normalize_rows:
        norms = np.linalg.norm(patch_features, axis=1, keepdims=True)
        patch_features = patch_features / np.maximum(norms, 1e-12)
    with no_grad():
        text_tokens = model.text_encoder(tokenize(phrase, vocab, cfg.max_text_len)[None, :])
    cls_vector = text_tokens.data[0, 0]

    patch_scores = (what[:, None] * patch_features) @ cls_vector  # (N,)
    grid = patch_scores.reshape(cfg.grid_side, cfg.grid_side)
    h, w = image01.shape
    upsampled = T.bilinear_upsample(Tensor(grid), h, w).data
    return GroundingMap(scores=upsampled, phrase=phrase, tau_w=tau_w, grid_side=cfg.grid_side)


# -- zero-shot classification ---------------------------------------------------


def default_prompt_pairs(classes=CLASSES) -> dict[str, tuple[str, str]]:
    return {c: (f"there is a {c}", f"there is no {c}") for c in classes}


def prompt_pair_score(sim_pos, sim_neg, tau: float):
    """Softmax over the two prompt similarities, taken at the positive entry."""
    if tau <= 0.0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    return expit((np.asarray(sim_pos) - np.asarray(sim_neg)) / tau)


def zero_shot_scores(
    images01: np.ndarray,
    prompt_pairs: dict[str, tuple[str, str]],
    model: MacoModel,
    vocab: Vocabulary,
    cfg: RunConfig,
) -> dict[str, np.ndarray]:
    """Per-class probability that each image matches the positive prompt.

    The score is the softmax over the (positive, negative) prompt similarities
    at the positive entry, using the pooled+projected joint embeddings and the
    learned temperature.
    """
    for cls, pair in prompt_pairs.items():
        if len(pair) != 2 or not pair[0] or not pair[1]:
            raise InputError(f"class '{cls}' needs both a positive and a negative prompt")
    images01 = np.asarray(images01, dtype=np.float64)
    if images01.ndim == 2:
        images01 = images01[None]
    classes = list(prompt_pairs)
    prompts = [p for cls in classes for p in prompt_pairs[cls]]
    with no_grad():
        image_tokens = Tensor(encode_full_images(model, cfg, images01))
        text_tokens = model.text_encoder(tokenize_batch(prompts, vocab, cfg.max_text_len))
        v, t = model.pool_and_project(image_tokens, text_tokens)
        tau = float(model.tau().data)
    sims = v.data @ t.data.T  # (B, 2K)
    scores: dict[str, np.ndarray] = {}
    for k, cls in enumerate(classes):
        scores[cls] = prompt_pair_score(sims[:, 2 * k], sims[:, 2 * k + 1], tau)
    return scores


def zero_shot_auc(
    samples: list[PairedSample],
    model: MacoModel,
    vocab: Vocabulary,
    cfg: RunConfig,
    prompt_pairs: dict[str, tuple[str, str]] | None = None,
) -> dict[str, float]:
    """AUC per class plus the macro average over a labeled split."""
    if prompt_pairs is None:
        prompt_pairs = default_prompt_pairs()
    images = np.stack([s.image for s in samples])
    labels = np.stack([s.labels for s in samples])
    scores = zero_shot_scores(images, prompt_pairs, model, vocab, cfg)
    out: dict[str, float] = {}
    for cls, cls_scores in scores.items():
        idx = CLASSES.index(cls)
        y = labels[:, idx].astype(int)
        if y.min() == y.max():
            raise MetricError(f"class '{cls}' has a single label value in this split")
        out[cls] = auc(cls_scores, y)
    out["macro"] = float(np.mean([out[c] for c in scores]))
    return out


# -- linear probe ----------------------------------------------------------------


def pooled_features(model: MacoModel, cfg: RunConfig, images01: np.ndarray) -> np.ndarray:
    """Frozen pooled encoder features (pre-projection), one row per image."""
    tokens = encode_full_images(model, cfg, images01)
    with no_grad():
        return model.pool_image(Tensor(tokens)).data


def linear_probe(
    train_samples: list[PairedSample],
    test_samples: list[PairedSample],
    model: MacoModel,
    cfg: RunConfig,
    epochs: int = 200,
    lr: float = 0.05,
    momentum: float = 0.9,
) -> tuple[dict[str, float], np.ndarray]:
    """Multi-label linear classifier on frozen pooled features.

    Trained full-batch with sigmoid cross-entropy and SGD momentum; returns
    per-class AUC (plus macro) on the held-out split and the learned weights.
    """
    train_labels = np.stack([s.labels for s in train_samples])
    for k, cls in enumerate(CLASSES):
        col = train_labels[:, k]
        if col.min() == col.max():
            raise InputError(f"training data has a single label value for class '{cls}'")
    feats = pooled_features(model, cfg, np.stack([s.image for s in train_samples]))
    targets = Tensor(train_labels)

    weight = Tensor(np.zeros((feats.shape[1], len(CLASSES))), requires_grad=True)
    bias = Tensor(np.zeros(len(CLASSES)), requires_grad=True)
    optimizer = SGDMomentum([("probe.weight", weight), ("probe.bias", bias)], lr=lr, momentum=momentum)
    x = Tensor(feats)
    for _ in range(epochs):
        logits = T.add(T.matmul(x, weight), bias)
        # sigmoid cross-entropy: softplus(z) - y*z, averaged over all entries
        loss = T.tmean(T.sub(T.softplus(logits), T.mul(targets, logits)))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

    test_feats = pooled_features(model, cfg, np.stack([s.image for s in test_samples]))
    test_labels = np.stack([s.labels for s in test_samples])
    test_logits = test_feats @ weight.data + bias.data
    out: dict[str, float] = {}
    for k, cls in enumerate(CLASSES):
        y = test_labels[:, k].astype(int)
        if y.min() == y.max():
            raise MetricError(f"class '{cls}' has a single label value in the test split")
        out[cls] = auc(test_logits[:, k], y)
    out["macro"] = float(np.mean([out[c] for c in CLASSES]))
    return out, weight.data.copy()
