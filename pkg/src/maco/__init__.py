"""Masked-contrastive image-report pretraining with correlation weighting.

The package is organized as a small numpy library:

- ``tensor``      float64 tensors with reverse-mode autodiff
- ``gradcheck``   finite-difference verification of every op and the objective
- ``optim``       AdamW / SGD-momentum and the warmup+cosine schedule
- ``patching``    patch grids, random masking, block-mean downsampling
- ``text``        closed-vocabulary tokenizer
- ``model``       image/text encoders, reconstruction decoder, heads
- ``objectives``  reconstruction, importance weighting, contrastive losses
- ``metrics``     CNR, mIoU, pointing game, AUC
- ``inference``   phrase grounding, zero-shot classification, linear probe
- ``datagen``     synthetic paired image-report corpus with exact boxes
- ``train``       the pretraining loop
- ``cli``         the ``maco`` command-line entry point
"""

from .boxes import Box
from .config import RunConfig
from .datagen import PairedSample, SceneSpec, build_vocabulary, generate_corpus
from .gradcheck import finite_diff_check, run_gradient_suite
from .inference import GroundingMap, WeightMap, grounding_map, linear_probe, zero_shot_auc
from .metrics import auc, cnr, miou, pointing_game
from .model import MacoModel
from .objectives import (
    combined_loss,
    importance_scores,
    info_nce,
    reconstruction_loss,
    rescale_scores,
    weighted_contrastive_loss,
)
from .optim import AdamW, SGDMomentum, lr_schedule
from .patching import MaskPlan, PatchGrid, downsample, partition, sample_mask
from .tensor import Tensor, no_grad
from .train import pretrain, restore_model

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "Box",
    "GroundingMap",
    "MacoModel",
    "MaskPlan",
    "PairedSample",
    "PatchGrid",
    "RunConfig",
    "SGDMomentum",
    "SceneSpec",
    "Tensor",
    "WeightMap",
    "auc",
    "build_vocabulary",
    "cnr",
    "combined_loss",
    "downsample",
    "finite_diff_check",
    "generate_corpus",
    "grounding_map",
    "importance_scores",
    "info_nce",
    "linear_probe",
    "lr_schedule",
    "miou",
    "no_grad",
    "partition",
    "pointing_game",
    "pretrain",
    "reconstruction_loss",
    "rescale_scores",
    "restore_model",
    "run_gradient_suite",
    "sample_mask",
    "weighted_contrastive_loss",
    "zero_shot_auc",
    "__version__",
]
