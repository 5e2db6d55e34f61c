"""Evaluation metrics: CNR, mIoU over quantile thresholds, pointing game, AUC."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .boxes import Box, boxes_mask
from .errors import MetricError, ParameterError

MIOU_QUANTILES = (0.5, 0.6, 0.7, 0.8, 0.9)

_CNR_EPS = 1e-12


def cnr(score_map: np.ndarray, box: Box) -> float:
    """Contrast-to-noise ratio of the scores inside vs. outside the box."""
    score_map = np.asarray(score_map, dtype=np.float64)
    inside = boxes_mask(score_map.shape, [box])
    outside = ~inside
    if not outside.any():
        raise MetricError("box covers the whole map: exterior is empty")
    mu_in, mu_out = score_map[inside].mean(), score_map[outside].mean()
    var_in, var_out = score_map[inside].var(), score_map[outside].var()
    return float((mu_in - mu_out) / np.sqrt(var_in + var_out + _CNR_EPS))


def miou(score_map: np.ndarray, boxes: list[Box], quantiles=MIOU_QUANTILES) -> float:
    """IoU of the thresholded map against the union of boxes, averaged over
    map-quantile thresholds (monotone-transform invariant by construction)."""
    if len(boxes) == 0:
        raise ParameterError("miou needs at least one box")
    quantiles = tuple(quantiles)
    if len(quantiles) == 0:
        raise ParameterError("miou needs a nonempty threshold list")
    score_map = np.asarray(score_map, dtype=np.float64)
    truth = boxes_mask(score_map.shape, boxes)
    total = 0.0
    for q in quantiles:
        # "lower" keeps thresholds at actual map values, so strictly monotone
        # transforms of the map cannot flip any comparison
        t = np.quantile(score_map, q, method="lower")
        pred = score_map >= t
        union = (pred | truth).sum()
        inter = (pred & truth).sum()
        total += inter / union if union else 0.0
    return float(total / len(quantiles))


def pointing_game(score_map: np.ndarray, boxes: list[Box]) -> int:
    """1 iff the argmax pixel falls inside any box; ties pick the lowest
    row-major index."""
    if len(boxes) == 0:
        raise ParameterError("pointing_game needs at least one box")
    score_map = np.asarray(score_map, dtype=np.float64)
    flat = int(np.argmax(score_map))
    r, c = divmod(flat, score_map.shape[1])
    return int(boxes_mask(score_map.shape, boxes)[r, c])


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores contribute one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricError(f"auc: got scores {scores.shape} and labels {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"auc needs both classes (got {n_pos} positive, {n_neg} negative)")
    ranks = rankdata(scores, method="average")
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
