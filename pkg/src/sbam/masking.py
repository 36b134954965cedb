"""Mask generation: random baseline, salience-guided masking and adaptive ratios.

Every strategy keeps ``K = ceil(L * (1 - gamma))`` tokens visible, so
strategies differ only in *which* tokens are hidden. Salience-guided masking
hides the highest (noise-adjusted) salience tokens; the K lowest stay
visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from sbam.errors import ConfigError, ParameterError, ShapeError
from sbam.numerics import FLOAT, argsort_asc
from sbam.salience import SalienceMap, adjust_with_noise, token_salience
from sbam.tokenize import TokenBatch

STRATEGIES = ("random", "sbam", "sbam_amr", "salience_only")

# absorbs float error in L * (1 - gamma), e.g. 10 * (1 - 0.7) = 3.0000000000000004
_CEIL_SLACK = 1e-9


@dataclass(frozen=True)
class MaskSet:
    """Binary mask (N, L), 1 = masked, and realized masked fraction per sample."""

    mask: np.ndarray
    ratios: np.ndarray

    @classmethod
    def from_mask(cls, mask) -> "MaskSet":
        m = np.asarray(mask, dtype=np.uint8)
        if m.ndim != 2:
            raise ShapeError(f"mask must be (N, L), got {m.shape}")
        if m.size and m.max() > 1:
            raise ParameterError("mask entries must be 0 or 1")
        L = m.shape[1]
        ratios = m.sum(axis=1) / L if L else np.zeros(m.shape[0])
        return cls(m, ratios.astype(np.float64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def masked_total(self) -> int:
        return int(self.mask.sum())


def normalize_strategy(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    if key not in STRATEGIES:
        raise ConfigError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}")
    return key


@dataclass(frozen=True)
class MaskingConfig:
    base_ratio: float = 0.75
    delta_r: float = 0.15
    delta: float = 0.1
    noise_amplitude: float = 0.5
    seed: int = 0
    strategy: str = "sbam"
    invert_selection: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", normalize_strategy(self.strategy))
        r, dr = self.base_ratio, self.delta_r
        if not 0 <= r <= 1:
            raise ConfigError(f"base_ratio must be in [0, 1], got {r}")
        if dr < 0:
            raise ConfigError(f"delta_r must be >= 0, got {dr}")
        # small tolerance so that e.g. 0.85 + 0.15 is accepted
        if r - dr < -1e-12 or r + dr > 1 + 1e-12:
            raise ConfigError(
                f"base_ratio +/- delta_r must stay in [0, 1], got r={r}, delta_r={dr}"
            )
        if not 0 <= self.delta <= 1:
            raise ConfigError(f"delta must be in [0, 1], got {self.delta}")
        if self.noise_amplitude < 0:
            raise ConfigError(f"noise_amplitude must be >= 0, got {self.noise_amplitude}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @classmethod
    def from_mapping(cls, values: dict) -> "MaskingConfig":
        """Build from string or typed values; unknown keys are ignored."""
        kwargs = {}
        for f in fields(cls):
            if f.name not in values:
                continue
            v = values[f.name]
            if f.type == "bool" and isinstance(v, str):
                v = v.strip().lower() in ("1", "true", "yes", "on")
            elif f.type == "float":
                v = float(v)
            elif f.type == "int":
                v = int(v)
            kwargs[f.name] = v
        return cls(**kwargs)


def visible_count(L: int, gamma: float) -> int:
    """``ceil(L * (1 - gamma))``, the number of tokens left visible."""
    if not 0 <= gamma <= 1:
        raise ParameterError(f"masking ratio must be in [0, 1], got {gamma}")
    return min(L, max(0, math.ceil(L * (1.0 - gamma) - _CEIL_SLACK)))


def masked_count(L: int, gamma: float) -> int:
    return L - visible_count(L, gamma)


def random_mask(n: int, L: int, gamma: float, rng: np.random.Generator) -> MaskSet:
    """Mask ``masked_count(L, gamma)`` tokens per sample uniformly without replacement."""
    k = visible_count(L, gamma)
    order = argsort_asc(rng.random((n, L)))
    mask = np.ones((n, L), dtype=np.uint8)
    np.put_along_axis(mask, order[:, :k], 0, axis=1)
    return MaskSet.from_mask(mask)


def sbam_mask(s: SalienceMap, gamma_per_sample, invert_selection: bool = False) -> MaskSet:
    """Keep the K lowest adjusted-salience tokens visible, mask the rest.

    ``invert_selection`` keeps the K *highest* tokens visible instead.
    Ties go to the lower token index in either direction.
    """
    if s.adjusted is None:
        raise ParameterError("sbam_mask needs an adjusted salience map (see adjust_with_noise)")
    adj = np.asarray(s.adjusted, dtype=np.float64)
    n, L = adj.shape
    gammas = np.broadcast_to(np.asarray(gamma_per_sample, dtype=np.float64), (n,))
    order = argsort_asc(-adj if invert_selection else adj)
    mask = np.ones((n, L), dtype=np.uint8)
    for i in range(n):
        mask[i, order[i, : visible_count(L, float(gammas[i]))]] = 0
    return MaskSet.from_mask(mask)


def amr_ratio(scores, cfg: MaskingConfig) -> np.ndarray:
    """Per-sample adaptive ratio ``r - dr + 2 dr * mean(scores > delta)``."""
    if isinstance(scores, SalienceMap):
        scores = scores.scores
    s = np.asarray(scores, dtype=np.float64)
    frac = (s > cfg.delta).mean(axis=1)
    r, dr = cfg.base_ratio, cfg.delta_r
    ratio = r - dr + 2.0 * dr * frac
    # r - dr may be a hair below 0 (or r + dr above 1) after config tolerance
    return np.clip(ratio, max(r - dr, 0.0), min(r + dr, 1.0))


def generate_mask(
    x: TokenBatch, cfg: MaskingConfig, rng: np.random.Generator, embeddings=None
) -> tuple[MaskSet, SalienceMap | None]:
    """Produce a mask for ``x`` with the configured strategy.

    Salience is computed from ``embeddings`` when given, otherwise from the
    raw patch tokens. The salience map is returned for strategies that use
    it, else None.
    """
    n, L, _ = x.shape
    if cfg.strategy == "random":
        return random_mask(n, L, cfg.base_ratio, rng), None
    s = token_salience(x if embeddings is None else embeddings)
    if s.shape != (n, L):
        raise ShapeError(f"salience shape {s.shape} does not match tokens ({n}, {L})")
    amplitude = 0.0 if cfg.strategy == "salience_only" else cfg.noise_amplitude
    if cfg.strategy == "sbam_amr":
        gammas = amr_ratio(s.scores, cfg)
    else:
        gammas = np.full(n, cfg.base_ratio)
    s = adjust_with_noise(s, rng, amplitude)
    return sbam_mask(s, gammas, cfg.invert_selection), s


def apply_mask(x: TokenBatch, m: MaskSet) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Split out visible tokens per sample, in original order.

    Returns ``(visible, positions)`` where ``positions[i]`` holds the indices
    of the visible tokens of sample ``i``.
    """
    if m.shape != x.shape[:2]:
        raise ShapeError(f"mask shape {m.shape} does not match tokens {x.shape[:2]}")
    positions = [np.flatnonzero(row == 0) for row in m.mask]
    visible = [x.tokens[i, pos] for i, pos in enumerate(positions)]
    return visible, positions


def scatter(visible, positions, L: int, mask_token) -> np.ndarray:
    """Rebuild full (N, L, D) sequences, filling hidden slots with ``mask_token``."""
    mask_token = np.asarray(mask_token, dtype=FLOAT)
    out = np.broadcast_to(mask_token, (len(visible), L, mask_token.shape[-1])).copy()
    for i, (v, pos) in enumerate(zip(visible, positions)):
        out[i, pos] = v
    return out
