"""Masked reconstruction loss and its gradient.

The loss is the squared L2 error summed over the D dims of each masked token,
averaged over the number of masked *tokens*. Many MAE codebases average over
elements (tokens x D) instead; this one does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sbam.errors import EmptyMaskError, ShapeError
from sbam.masking import MaskSet
from sbam.tokenize import TokenBatch


@dataclass(frozen=True)
class LossReport:
    value: float
    masked_count: int
    per_sample: np.ndarray


def _unpack(pred, target, m: MaskSet):
    p = pred.tokens if isinstance(pred, TokenBatch) else np.asarray(pred)
    t = target.tokens if isinstance(target, TokenBatch) else np.asarray(target)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ")
    if m.shape != p.shape[:2]:
        raise ShapeError(f"mask {m.shape} does not match tokens {p.shape[:2]}")
    count = m.masked_total
    if count == 0:
        raise EmptyMaskError("loss is undefined when no token is masked")
    return p, t, m.mask, count


def mim_loss(pred, target, m: MaskSet) -> LossReport:
    p, t, mask, count = _unpack(pred, target, m)
    diff = p.astype(np.float64) - t.astype(np.float64)
    per_token = (diff * diff).sum(axis=-1) * mask
    per_sample = per_token.sum(axis=1)
    return LossReport(float(per_sample.sum() / count), count, per_sample)


def mim_loss_grad(pred, target, m: MaskSet):
    """d(loss)/d(pred); zero at visible tokens.

    Returns a TokenBatch when ``pred`` is one, otherwise an array of
    ``pred``'s dtype.
    """
    p, t, mask, count = _unpack(pred, target, m)
    g = (2.0 * (p - t) * mask[..., None] / count).astype(p.dtype, copy=False)
    return pred.with_tokens(g) if isinstance(pred, TokenBatch) else g
