"""Training objectives: masked high-resolution reconstruction, importance
scoring of masked position maps, the correlation-weighted contrastive loss,
and their convex combination.

The weighted contrastive loss has two parts per instance: the pair logits
scaled by that instance's importance weight (sharper alignment for batches
whose sampled patches carry more signal), plus the plain InfoNCE term scaled
by the *detached* weight, which prioritizes well-sampled pairs without
letting that term train the importance head.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError, ObjectiveError, ParameterError
from .model import ImportanceHead
from .patching import MaskPlan
from .tensor import Tensor


def reconstruction_loss(prediction: Tensor, targets: np.ndarray, plans: list[MaskPlan]) -> Tensor:
    """Mean squared error over the masked-slot entries only."""
    targets = np.asarray(targets, dtype=np.float64)
    if prediction.shape != targets.shape:
        raise DimensionError(
            f"reconstruction {prediction.shape} does not match targets {targets.shape}"
        )
    b, n, _ = prediction.shape
    if len(plans) != b:
        raise DimensionError(f"{b} predictions but {len(plans)} mask plans")
    mask = np.zeros((b, n, 1))
    for row, plan in enumerate(plans):
        mask[row, plan.masked, 0] = 1.0
    n_masked_entries = mask.sum() * prediction.shape[2]
    if n_masked_entries == 0:
        raise ObjectiveError("reconstruction loss needs at least one masked patch")
    diff = T.sub(prediction, Tensor(targets))
    masked_sq = T.mul(T.mul(diff, diff), Tensor(mask))
    return T.mul(T.tsum(masked_sq), 1.0 / n_masked_entries)


def importance_scores(position_maps: np.ndarray, head: ImportanceHead) -> Tensor:
    """Per-instance dot product of the masked position map with the head weights."""
    return head.scores(position_maps)


def rescale_scores(raw_scores: Tensor) -> Tensor:
    """Softplus rescale to strictly positive importance weights."""
    return T.softplus(raw_scores)


def _check_logits_square(logits: Tensor) -> int:
    if logits.ndim != 2 or logits.shape[0] != logits.shape[1]:
        raise DimensionError(f"contrastive logits must be square, got {logits.shape}")
    return logits.shape[0]


def _tau_tensor(tau) -> Tensor:
    tau = T.as_tensor(tau)
    if tau.size != 1:
        raise ParameterError(f"temperature must be a scalar, got shape {tau.shape}")
    if float(tau.data.reshape(())) <= 0.0:
        raise ParameterError(f"temperature must be positive, got {float(tau.data.reshape(()))}")
    return tau


def _diag_mean_log_softmax(scaled: Tensor, axis: int, eye: Tensor, batch: int) -> Tensor:
    """Mean over the diagonal of a log-softmax taken along ``axis``."""
    lsm = T.log_softmax(scaled, axis=axis)
    return T.mul(T.tsum(T.mul(lsm, eye)), 1.0 / batch)


def info_nce(logits: Tensor, tau) -> Tensor:
    """Symmetric InfoNCE: mean of the image->text and text->image cross-entropies."""
    b = _check_logits_square(logits)
    tau = _tau_tensor(tau)
    eye = Tensor(np.eye(b))
    scaled = T.div(logits, tau)
    row = _diag_mean_log_softmax(scaled, -1, eye, b)
    col = _diag_mean_log_softmax(scaled, 0, eye, b)
    return T.mul(T.add(row, col), -0.5)


def _check_weights(weights: Tensor, b: int) -> None:
    if weights.shape != (b,):
        raise DimensionError(f"need one weight per instance: got {weights.shape} for batch {b}")
    if (weights.data <= 0.0).any():
        raise ObjectiveError("importance weights must be strictly positive (softplus upstream)")


def weighted_first_term(logits: Tensor, tau, weights: Tensor) -> Tensor:
    """Cross-entropies of the weight-sharpened logits, both directions averaged.

    Instance i's weight multiplies its row (image->text direction) or its
    column (text->image direction) of the similarity matrix before the
    temperature division, so well-sampled pairs are aligned more sharply.
    """
    b = _check_logits_square(logits)
    tau = _tau_tensor(tau)
    _check_weights(weights, b)
    eye = Tensor(np.eye(b))
    w_rows = T.reshape(weights, (b, 1))
    w_cols = T.reshape(weights, (1, b))
    row = _diag_mean_log_softmax(T.div(T.mul(w_rows, logits), tau), -1, eye, b)
    col = _diag_mean_log_softmax(T.div(T.mul(w_cols, logits), tau), 0, eye, b)
    return T.mul(T.add(row, col), -0.5)


def weighted_second_term(
    logits: Tensor,
    tau,
    weights: Tensor,
    symmetric: bool = True,
    frozen_values: np.ndarray | None = None,
) -> Tensor:
    """Plain InfoNCE terms scaled per instance by the *detached* weight.

    The weight enters as a constant: this term prioritizes well-sampled pairs
    but contributes exactly zero gradient to the importance head.
    ``frozen_values`` pins the constants explicitly (used by the
    finite-difference harness, which must not see the weights vary).
    """
    b = _check_logits_square(logits)
    tau = _tau_tensor(tau)
    _check_weights(weights, b)
    eye = Tensor(np.eye(b))
    vals = weights.data if frozen_values is None else np.asarray(frozen_values, dtype=np.float64)
    wd_rows = Tensor(vals.reshape(b, 1))
    scaled = T.div(logits, tau)
    row = T.mul(T.tsum(T.mul(T.mul(T.log_softmax(scaled, axis=-1), eye), wd_rows)), 1.0 / b)
    if not symmetric:
        return T.mul(row, -1.0)
    col = T.mul(T.tsum(T.mul(T.mul(T.log_softmax(scaled, axis=0), eye), wd_rows)), 1.0 / b)
    return T.mul(T.add(row, col), -0.5)


def weighted_contrastive_loss(
    logits: Tensor,
    tau,
    weights: Tensor,
    symmetrize_detached_term: bool = True,
    frozen_detached: np.ndarray | None = None,
) -> Tensor:
    """Importance-weighted contrastive loss over a batch similarity matrix.

    Sum of :func:`weighted_first_term` (weights sharpen the logits) and
    :func:`weighted_second_term` (detached weights scale the plain InfoNCE
    contributions).  Both terms average the image->text and text->image
    directions; set ``symmetrize_detached_term`` to False to keep the second
    term image->text only.
    """
    first = weighted_first_term(logits, tau, weights)
    second = weighted_second_term(
        logits, tau, weights, symmetric=symmetrize_detached_term, frozen_values=frozen_detached
    )
    return T.add(first, second)


def combined_loss(pretext: Tensor, contrastive: Tensor, lam: float) -> Tensor:
    """Convex combination lam * pretext + (1 - lam) * contrastive."""
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"loss mixing weight must lie in [0, 1], got {lam}")
    return T.add(T.mul(pretext, lam), T.mul(contrastive, 1.0 - lam))
