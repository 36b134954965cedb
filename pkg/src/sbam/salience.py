"""Token salience from the outgoing weight of a softmax-normalized affinity matrix.

For tokens ``X`` of one image, the affinity is ``A = X @ X.T``. Each row of
``A`` is softmax-normalized, so row ``i`` says how token ``i`` distributes its
attention. Summing column ``i`` instead gives how much attention token ``i``
receives from everyone, i.e. its contribution to the rest of the image. That
column sum, min-max rescaled per image, is the salience score.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from sbam.errors import ParameterError, ShapeError
from sbam.numerics import as_mat3, bmm, colsum, minmax_normalize, softmax_rows, uniform
from sbam.tokenize import TokenBatch


@dataclass(frozen=True)
class SalienceMap:
    """Per-token scores in [0, 1], shape (N, L), plus the noise-adjusted copy."""

    scores: np.ndarray
    adjusted: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


def _tokens(x) -> np.ndarray:
    if isinstance(x, TokenBatch):
        return x.tokens
    return as_mat3(x, "tokens")


def affinity(x) -> np.ndarray:
    """Per-sample token Gram matrices, shape (N, L, L).

    ``x`` is a :class:`TokenBatch` or any (N, L, D) array, e.g. embeddings
    produced by an external encoder.
    """
    t = _tokens(x)
    return bmm(t, t.transpose(0, 2, 1))


def outgoing_weight(x) -> np.ndarray:
    """Column sums of the row-softmaxed affinity, before normalization."""
    return colsum(softmax_rows(affinity(x)))


def token_salience(x) -> SalienceMap:
    t = _tokens(x)
    if t.shape[1] < 1:
        raise ShapeError("token_salience needs at least one token per sample")
    return SalienceMap(minmax_normalize(outgoing_weight(t)))


def adjust_with_noise(s: SalienceMap, rng: np.random.Generator, amplitude: float = 0.5) -> SalienceMap:
    """Add U[0, amplitude) noise to every score. Amplitude 0 copies the scores."""
    if amplitude < 0:
        raise ParameterError(f"noise amplitude must be >= 0, got {amplitude}")
    scores = s.scores.astype(np.float64)
    if amplitude == 0:
        return replace(s, adjusted=scores)
    # float64 sum: in float32, 1 + 0.49999997 rounds up to 1.5
    noise = uniform(rng, s.scores.shape, 0.0, amplitude)
    return replace(s, adjusted=scores + noise.astype(np.float64))
