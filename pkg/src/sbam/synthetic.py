"""Planted-object images: a bright rectangle on a dim background.

Both regions carry a horizontal intensity ramp inside every patch, and the
object adds faint row stripes, so normalized patch targets are learnable.

The rectangle is aligned to the patch grid, so each token is either entirely
object or entirely background and ground truth for salience is exact.
"""

from __future__ import annotations

import numpy as np

from sbam.errors import ParameterError
from sbam.numerics import make_rng
from sbam.tokenize import Image


def object_shape(rows: int, cols: int, count: int) -> tuple[int, int]:
    """Most square (h, w) patch rectangle with h * w == count fitting the grid."""
    best = None
    for h in range(1, rows + 1):
        if count % h:
            continue
        w = count // h
        if w > cols:
            continue
        key = (abs(h - w), h)
        if best is None or key < best[0]:
            best = (key, (h, w))
    if best is None:
        raise ParameterError(f"no {count}-patch rectangle fits a {rows}x{cols} grid")
    return best[1]


def planted_object_images(
    n: int,
    seed: int = 0,
    side: int = 32,
    patch_side: int = 8,
    coverage: float = 0.25,
    channels: int = 1,
    noise: float = 0.01,
) -> tuple[list[Image], np.ndarray]:
    """Generate ``n`` images and a (n, L) boolean map of object tokens.

    ``coverage`` is the fraction of patches the object occupies, rounded to a
    whole number of patches (at least one).
    """
    if side % patch_side:
        raise ParameterError(f"side={side} is not divisible by patch_side={patch_side}")
    if not 0 < coverage <= 1:
        raise ParameterError(f"coverage must be in (0, 1], got {coverage}")
    rng = make_rng(seed)
    rows = cols = side // patch_side
    count = max(1, round(coverage * rows * cols))
    oh, ow = object_shape(rows, cols, count)

    yy, xx = np.mgrid[0:side, 0:side]
    ramp = (xx % patch_side) / (patch_side - 1) if patch_side > 1 else np.zeros((side, side))
    stripes = np.where(yy % 2 == 0, 1.0, -1.0)

    images, objects = [], np.zeros((n, rows * cols), dtype=bool)
    for i in range(n):
        bg = rng.uniform(0.05, 0.2)
        fg = rng.uniform(0.75, 0.9)
        r0 = int(rng.integers(0, rows - oh + 1))
        c0 = int(rng.integers(0, cols - ow + 1))
        px = bg + 0.08 * ramp
        obj = np.zeros((side, side), dtype=bool)
        obj[r0 * patch_side : (r0 + oh) * patch_side, c0 * patch_side : (c0 + ow) * patch_side] = True
        px = np.where(obj, fg + 0.15 * ramp + 0.03 * stripes, px)
        px = px[:, :, None] + noise * rng.standard_normal((side, side, channels))
        images.append(Image(np.clip(px, 0.0, 1.0)))
        grid = np.zeros((rows, cols), dtype=bool)
        grid[r0 : r0 + oh, c0 : c0 + ow] = True
        objects[i] = grid.ravel()
    return images, objects
