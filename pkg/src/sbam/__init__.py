"""Salience-based adaptive masking for masked image modeling.

Token salience from outgoing affinity weight, salience-guided mask
generation with an adaptive per-image masking ratio, a tiny masked
autoencoder trainer, and PIMR-style sweep metrics.
"""

from sbam.masking import MaskingConfig, MaskSet, amr_ratio, generate_mask, random_mask, sbam_mask
from sbam.metrics import SweepRecord, global_pimr, pimr
from sbam.mimloss import LossReport, mim_loss, mim_loss_grad
from sbam.numerics import make_rng
from sbam.salience import SalienceMap, adjust_with_noise, affinity, token_salience
from sbam.synthetic import planted_object_images
from sbam.tokenize import Image, TokenBatch, normalize_targets, patchify, unpatchify
from sbam.trainer import TinyMaeParams, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Image",
    "LossReport",
    "MaskSet",
    "MaskingConfig",
    "SalienceMap",
    "SweepRecord",
    "TinyMaeParams",
    "TokenBatch",
    "TrainConfig",
    "adjust_with_noise",
    "affinity",
    "amr_ratio",
    "generate_mask",
    "global_pimr",
    "make_rng",
    "mim_loss",
    "mim_loss_grad",
    "normalize_targets",
    "patchify",
    "pimr",
    "planted_object_images",
    "random_mask",
    "sbam_mask",
    "token_salience",
    "train",
    "unpatchify",
]
