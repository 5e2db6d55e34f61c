"""Pretraining loop: augmentation, masking, both encoders, the combined loss,
AdamW with warmup+cosine, CSV logging, and per-epoch checkpoints."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import objectives, tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .datagen import PairedSample, augment_image, augment_text, build_vocabulary
from .errors import NumericalAbort, TrainingError
from .model import MacoModel
from .optim import AdamW, lr_schedule
from .patching import MaskPlan, partition_batch, downsample, sample_mask
from .tensor import Tensor
from .text import tokenize_batch

LOG_COLUMNS = ("step", "lr", "loss_pretext", "loss_contrastive", "loss_total", "tau", "mean_weight")

_LOG_TAU_BOUNDS = (math.log(1e-4), math.log(10.0))


@dataclass
class TrainResult:
    model: MacoModel
    log_rows: list[dict]
    checkpoint_path: Path
    log_path: Path


def _standardize_patches(patches: np.ndarray) -> np.ndarray:
    mu = patches.mean(axis=-1, keepdims=True)
    sd = patches.std(axis=-1, keepdims=True)
    return (patches - mu) / (sd + 1e-6)


def build_batch(cfg: RunConfig, samples: list[PairedSample], rng: np.random.Generator, vocab):
    """Assemble one training batch: augmented HR targets, masked LR inputs, ids."""
    images = []
    reports = []
    for s in samples:
        images.append(augment_image(s.image, rng))
        reports.append(augment_text(s.report, rng))
    hr = np.stack(images)
    lr = downsample(hr, cfg.downsample_ratio)
    targets = partition_batch(hr, cfg.patch_size)
    if cfg.per_patch_standardize:
        targets = _standardize_patches(targets)
    lr_patches = partition_batch(lr, cfg.lr_patch_size)
    plans = [sample_mask(cfg.n_patches, cfg.mask_ratio, rng) for _ in samples]
    selected = np.stack([lr_patches[i][p.sampled] for i, p in enumerate(plans)])
    positions = np.stack([p.sampled for p in plans])
    position_maps = np.stack([p.position_map for p in plans])
    ids = tokenize_batch(reports, vocab, cfg.max_text_len)
    return selected, positions, targets, plans, position_maps, ids


def compute_losses(
    cfg: RunConfig,
    model: MacoModel,
    selected,
    positions,
    targets,
    plans,
    position_maps,
    ids,
    frozen_detached: np.ndarray | None = None,
):
    """Forward pass producing (total, pretext, contrastive, mean_weight) tensors.

    With lam == 1 the contrastive branch is evaluated off the tape: it is
    still logged, but its parameters receive no gradient at all (and so are
    not updated, weight decay included).
    """
    image_tokens = model.image_encoder(selected, positions)
    recon = model.decoder(image_tokens, plans)
    loss_pret = objectives.reconstruction_loss(recon, targets, plans)

    def contrastive_branch():
        text_tokens = model.text_encoder(ids)
        v, t = model.pool_and_project(image_tokens, text_tokens)
        logits = T.matmul(v, T.transpose(t))
        tau = model.tau()
        raw = objectives.importance_scores(position_maps, model.importance)
        weights = objectives.rescale_scores(raw)
        if cfg.use_correlation_weighting:
            loss = objectives.weighted_contrastive_loss(
                logits,
                tau,
                weights,
                symmetrize_detached_term=cfg.symmetrize_detached_term,
                frozen_detached=frozen_detached,
            )
        else:
            loss = objectives.info_nce(logits, tau)
        return loss, float(weights.data.mean())

    if cfg.lam == 1.0:
        with T.no_grad():
            loss_contra, mean_w = contrastive_branch()
    else:
        loss_contra, mean_w = contrastive_branch()
    total = objectives.combined_loss(loss_pret, loss_contra, cfg.lam)
    return total, loss_pret, loss_contra, mean_w


def _rng_state_to_json(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _write_log(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def pretrain(
    cfg: RunConfig,
    train_samples: list[PairedSample],
    out_dir,
    model: MacoModel | None = None,
    optimizer: AdamW | None = None,
    rng: np.random.Generator | None = None,
    start_epoch: int = 0,
    log_rows: list[dict] | None = None,
) -> TrainResult:
    """Train from scratch (or continue via the resume arguments)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "checkpoint.bin"
    log_path = out_dir / "log.csv"

    vocab = build_vocabulary()
    if model is None:
        model = MacoModel(cfg, vocab_size=len(vocab), pad_id=vocab.pad_id, seed=cfg.seed)
    params = model.named_parameters()
    if optimizer is None:
        optimizer = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay,
                          beta1=cfg.beta1, beta2=cfg.beta2)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    log_rows = list(log_rows or [])

    n = len(train_samples)
    steps_per_epoch = max(1, n // cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    warmup_steps = int(round(cfg.warmup_frac * total_steps))

    def snapshot(epoch: int) -> None:
        save_checkpoint(
            checkpoint_path,
            cfg,
            {name: p.data for name, p in params},
            optimizer.state_arrays(),
            epoch=epoch,
            optimizer_step=optimizer.step_count,
            rng_state=_rng_state_to_json(rng),
        )

    if start_epoch == 0:
        snapshot(0)  # last-good state before any update

    step = start_epoch * steps_per_epoch
    for epoch in range(start_epoch, cfg.epochs):
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            batch_idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            batch = [train_samples[i] for i in batch_idx]
            inputs = build_batch(cfg, batch, rng, vocab)
            total, loss_pret, loss_contra, mean_w = compute_losses(cfg, model, *inputs)
            if not np.isfinite(total.data):
                _write_log(log_path, log_rows)
                raise NumericalAbort(
                    f"non-finite loss at step {step}; last-good checkpoint: {checkpoint_path}"
                )
            model.zero_grad()
            total.backward()
            lr_now = lr_schedule(step, warmup_steps, total_steps, cfg.lr)
            try:
                optimizer.step(lr_now)
            except TrainingError:
                _write_log(log_path, log_rows)
                raise
            np.clip(model.log_tau.data, *_LOG_TAU_BOUNDS, out=model.log_tau.data)
            log_rows.append(
                {
                    "step": step,
                    "lr": repr(lr_now),
                    "loss_pretext": repr(float(loss_pret.data)),
                    "loss_contrastive": repr(float(loss_contra.data)),
                    "loss_total": repr(float(total.data)),
                    "tau": repr(float(np.exp(model.log_tau.data))),
                    "mean_weight": repr(mean_w),
                }
            )
            step += 1
        snapshot(epoch + 1)
        _write_log(log_path, log_rows)
    return TrainResult(model=model, log_rows=log_rows, checkpoint_path=checkpoint_path, log_path=log_path)


def restore_model(cfg: RunConfig, parameters: dict[str, np.ndarray]) -> MacoModel:
    """Build a model and overwrite every named parameter from a checkpoint."""
    vocab = build_vocabulary()
    model = MacoModel(cfg, vocab_size=len(vocab), pad_id=vocab.pad_id, seed=cfg.seed)
    named = dict(model.named_parameters())
    missing = set(named) - set(parameters)
    extra = set(parameters) - set(named)
    if missing or extra:
        raise TrainingError(f"checkpoint parameter mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
    for name, tensor in named.items():
        arr = parameters[name]
        if arr.shape != tensor.data.shape:
            raise TrainingError(f"parameter '{name}' shape {arr.shape} != model {tensor.data.shape}")
        tensor.data = arr.astype(np.float64, copy=True)
    return model


def resume_pretraining(checkpoint_path, train_samples: list[PairedSample], out_dir) -> TrainResult:
    """Continue a run from its checkpoint; bit-identical to an uninterrupted run."""
    ckpt = load_checkpoint(checkpoint_path)
    cfg = ckpt.config
    model = restore_model(cfg, ckpt.parameters)
    optimizer = AdamW(model.named_parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay,
                      beta1=cfg.beta1, beta2=cfg.beta2)
    optimizer.load_state_arrays(ckpt.optimizer_arrays, ckpt.meta["optimizer_step"])
    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt.meta["rng_state"]
    return pretrain(
        cfg,
        train_samples,
        out_dir,
        model=model,
        optimizer=optimizer,
        rng=rng,
        start_epoch=int(ckpt.meta["epoch"]),
    )
