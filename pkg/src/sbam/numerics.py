"""Dense float32 kernels used by the salience and masking code.

Arrays are plain numpy arrays. A "Mat3" is a C-contiguous float32 array of
shape (n, rows, cols); per-sample vectors are (n, L) arrays. Reductions
accumulate in float64 and round back to float32 so results do not depend on
BLAS blocking order.

Random numbers come from numpy's PCG64 bit generator, which is specified and
produces the same stream for a given seed on every platform.
"""

from __future__ import annotations

import numpy as np

from sbam.errors import ParameterError, ShapeError

FLOAT = np.float32


def as_mat3(a, name: str = "array") -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=FLOAT)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be rank 3 (n, rows, cols), got shape {arr.shape}")
    return arr


def make_rng(seed: int = 0) -> np.random.Generator:
    """Deterministic generator (PCG64) for a 64-bit unsigned seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def bmm(a, b) -> np.ndarray:
    """Batched matrix product ``out[k] = a[k] @ b[k]``."""
    a = as_mat3(a, "a")
    b = as_mat3(b, "b")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm shape mismatch: a{a.shape} vs b{b.shape}")
    out = np.matmul(a.astype(np.float64), b.astype(np.float64))
    return out.astype(FLOAT)


def softmax_rows(a) -> np.ndarray:
    """Softmax over the last axis of every batch slice, max-subtracted."""
    a = np.asarray(a, dtype=FLOAT)
    z = a.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=-1, keepdims=True)).astype(FLOAT)


def colsum(a) -> np.ndarray:
    """Sum each (n, L, L) slice over its row index: ``out[k, i] = sum_j a[k, j, i]``."""
    a = as_mat3(a, "a")
    return a.astype(np.float64).sum(axis=1).astype(FLOAT)


def minmax_normalize(v) -> np.ndarray:
    """Rescale the last axis to [0, 1].

    A constant vector maps to all zeros. Works on a single vector or on
    a batch of rows (normalized independently).
    """
    v = np.asarray(v, dtype=np.float64)
    lo = v.min(axis=-1, keepdims=True)
    span = v.max(axis=-1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (v - lo) / safe, 0.0)
    # division can round a hair past 1 in float32
    return np.clip(out, 0.0, 1.0).astype(FLOAT)


def argsort_asc(v) -> np.ndarray:
    """Stable ascending argsort over the last axis; ties keep index order."""
    return np.argsort(np.asarray(v), axis=-1, kind="stable")


def uniform(rng: np.random.Generator, shape, lo: float, hi: float) -> np.ndarray:
    """float32 samples in the half-open interval [lo, hi)."""
    if not lo < hi:
        raise ParameterError(f"uniform requires lo < hi, got lo={lo}, hi={hi}")
    x = rng.uniform(lo, hi, size=shape).astype(FLOAT)
    # rounding to float32 may land exactly on hi
    lo32 = FLOAT(lo)
    top = max(np.nextafter(FLOAT(hi), lo32), lo32)
    return np.clip(x, lo32, top)
