"""Patch tokenization and per-token normalized reconstruction targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sbam.errors import ParameterError, ShapeError
from sbam.numerics import FLOAT


@dataclass(frozen=True)
class Image:
    """A float image with values in [0, 1], stored as (height, width, channels)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=FLOAT)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ShapeError(f"image pixels must be (H, W) or (H, W, 1|3), got {px.shape}")
        if px.size and (px.min() < 0 or px.max() > 1 or not np.isfinite(px).all()):
            raise ParameterError("image pixels must lie in [0, 1]")
        object.__setattr__(self, "pixels", np.ascontiguousarray(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class TokenBatch:
    """Tokens of shape (N, L, D) with the patch grid they were cut from."""

    tokens: np.ndarray
    patch_side: int
    grid: tuple[int, int]
    channels: int

    def __post_init__(self):
        t = np.ascontiguousarray(self.tokens, dtype=FLOAT)
        if t.ndim != 3:
            raise ShapeError(f"tokens must be (N, L, D), got {t.shape}")
        rows, cols = self.grid
        if rows * cols != t.shape[1]:
            raise ShapeError(f"grid {self.grid} does not match L={t.shape[1]}")
        if self.patch_side**2 * self.channels != t.shape[2]:
            raise ShapeError(
                f"D={t.shape[2]} != patch_side^2 * channels "
                f"({self.patch_side}^2 * {self.channels})"
            )
        object.__setattr__(self, "tokens", t)
        object.__setattr__(self, "grid", (int(rows), int(cols)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.tokens.shape

    def with_tokens(self, tokens) -> "TokenBatch":
        return TokenBatch(tokens, self.patch_side, self.grid, self.channels)

    def take(self, index) -> "TokenBatch":
        """Select samples along the batch axis."""
        return self.with_tokens(self.tokens[np.asarray(index)])


def patchify(images, patch_side: int) -> TokenBatch:
    """Cut equally sized images into non-overlapping square patches.

    Token ``j`` is the patch at grid position ``(j // cols, j % cols)``.
    Inside a token, pixels are laid out row-major with channels innermost.
    """
    images = list(images)
    if not images:
        raise ParameterError("patchify needs at least one image")
    if patch_side <= 0:
        raise ParameterError(f"patch_side must be positive, got {patch_side}")
    h, w, c = images[0].pixels.shape
    for i, im in enumerate(images):
        if im.pixels.shape != (h, w, c):
            raise ShapeError(
                f"image {i} has shape {im.pixels.shape}, expected {(h, w, c)}"
            )
    if h % patch_side or w % patch_side:
        raise ShapeError(f"image size {w}x{h} is not divisible by patch_side={patch_side}")
    rows, cols = h // patch_side, w // patch_side
    px = np.stack([im.pixels for im in images])  # (N, H, W, C)
    n = px.shape[0]
    t = px.reshape(n, rows, patch_side, cols, patch_side, c)
    t = t.transpose(0, 1, 3, 2, 4, 5).reshape(n, rows * cols, patch_side * patch_side * c)
    return TokenBatch(t, patch_side, (rows, cols), c)


def unpatchify(batch: TokenBatch) -> list[Image]:
    """Inverse of :func:`patchify`."""
    n = batch.tokens.shape[0]
    rows, cols = batch.grid
    p, c = batch.patch_side, batch.channels
    t = batch.tokens.reshape(n, rows, cols, p, p, c).transpose(0, 1, 3, 2, 4, 5)
    px = t.reshape(n, rows * p, cols * p, c)
    return [Image(px[i]) for i in range(n)]


def normalize_targets(x, eps: float = 1e-6):
    """Standardize every token over its own D values.

    Uses the population standard deviation: ``(t - mean(t)) / (std(t) + eps)``.
    Accepts a TokenBatch (returns one) or a bare (..., D) array.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    t = (x.tokens if isinstance(x, TokenBatch) else np.asarray(x)).astype(np.float64)
    mu = t.mean(axis=-1, keepdims=True)
    sigma = t.std(axis=-1, keepdims=True)
    out = ((t - mu) / (sigma + eps)).astype(FLOAT)
    return x.with_tokens(out) if isinstance(x, TokenBatch) else out
