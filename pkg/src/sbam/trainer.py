"""A tiny masked autoencoder with hand-written backprop.

Architecture, per sample with tokens ``X`` of shape (L, D_in)::

    E = X @ W_embed + b_embed                  (L, H)
    Z = E, with masked rows replaced by mask_token
    Q, K, V = Z @ W_q, Z @ W_k, Z @ W_v
    P = softmax(Q @ K.T / sqrt(H))             row-wise
    Y = (P @ V) @ W_decode + b_decode          (L, D_in)

Trained with plain SGD on the masked reconstruction loss against
per-token normalized pixel targets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace

import numpy as np

from sbam.errors import ParameterError, ShapeError
from sbam.masking import MaskingConfig, MaskSet, generate_mask
from sbam.mimloss import mim_loss, mim_loss_grad
from sbam.numerics import FLOAT, make_rng
from sbam.tokenize import TokenBatch, normalize_targets, patchify

log = logging.getLogger(__name__)


@dataclass
class TinyMaeParams:
    embed_w: np.ndarray
    embed_b: np.ndarray
    attn_q: np.ndarray
    attn_k: np.ndarray
    attn_v: np.ndarray
    mask_token: np.ndarray
    decode_w: np.ndarray
    decode_b: np.ndarray

    @classmethod
    def init(cls, d_in: int, d_hidden: int, rng: np.random.Generator, dtype=FLOAT) -> "TinyMaeParams":
        def glorot(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)

        return cls(
            embed_w=glorot(d_in, d_hidden),
            embed_b=np.zeros(d_hidden, dtype),
            attn_q=glorot(d_hidden, d_hidden),
            attn_k=glorot(d_hidden, d_hidden),
            attn_v=glorot(d_hidden, d_hidden),
            mask_token=(0.02 * rng.standard_normal(d_hidden)).astype(dtype),
            decode_w=glorot(d_hidden, d_in),
            decode_b=np.zeros(d_in, dtype),
        )

    @classmethod
    def zeros_like(cls, other: "TinyMaeParams") -> "TinyMaeParams":
        return cls(**{k: np.zeros_like(v) for k, v in other.items()})

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def items(self):
        return [(name, getattr(self, name)) for name in self.names()]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in self.names()]

    def astype(self, dtype) -> "TinyMaeParams":
        return TinyMaeParams(**{k: v.astype(dtype) for k, v in self.items()})

    def copy(self) -> "TinyMaeParams":
        return self.astype(self.embed_w.dtype)

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays())

    @property
    def d_in(self) -> int:
        return self.embed_w.shape[0]

    @property
    def d_hidden(self) -> int:
        return self.embed_w.shape[1]


@dataclass
class ForwardCache:
    x: np.ndarray
    masked: np.ndarray  # (N, L) bool
    z: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    p: np.ndarray
    a: np.ndarray


def _tokens(x) -> np.ndarray:
    return x.tokens if isinstance(x, TokenBatch) else np.asarray(x)


def forward(params: TinyMaeParams, x, m: MaskSet) -> tuple[np.ndarray, ForwardCache]:
    """Predict all L tokens; returns (pred (N, L, D_in), cache for :func:`backward`)."""
    t = _tokens(x).astype(params.embed_w.dtype, copy=False)
    if t.ndim != 3 or t.shape[2] != params.d_in:
        raise ShapeError(f"tokens {t.shape} do not match embedding input dim {params.d_in}")
    if m.shape != t.shape[:2]:
        raise ShapeError(f"mask {m.shape} does not match tokens {t.shape[:2]}")
    masked = m.mask.astype(bool)
    e = t @ params.embed_w + params.embed_b
    z = np.where(masked[..., None], params.mask_token, e)
    q, k, v = z @ params.attn_q, z @ params.attn_k, z @ params.attn_v
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(params.d_hidden)
    scores = scores - scores.max(axis=-1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=-1, keepdims=True)
    a = p @ v
    pred = a @ params.decode_w + params.decode_b
    return pred, ForwardCache(t, masked, z, q, k, v, p, a)


def backward(params: TinyMaeParams, cache: ForwardCache, dpred) -> TinyMaeParams:
    """Exact parameter gradients given d(loss)/d(pred)."""
    dy = _tokens(dpred).astype(params.embed_w.dtype, copy=False)
    c = cache
    scale = 1.0 / np.sqrt(params.d_hidden)

    g_decode_w = np.einsum("nlh,nld->hd", c.a, dy)
    g_decode_b = dy.sum(axis=(0, 1))
    da = dy @ params.decode_w.T

    dp = da @ c.v.transpose(0, 2, 1)
    dv = c.p.transpose(0, 2, 1) @ da
    ds = c.p * (dp - (dp * c.p).sum(axis=-1, keepdims=True)) * scale
    dq = ds @ c.k
    dk = ds.transpose(0, 2, 1) @ c.q

    g_q = np.einsum("nlh,nlk->hk", c.z, dq)
    g_k = np.einsum("nlh,nlk->hk", c.z, dk)
    g_v = np.einsum("nlh,nlk->hk", c.z, dv)
    dz = dq @ params.attn_q.T + dk @ params.attn_k.T + dv @ params.attn_v.T

    sel = c.masked[..., None]
    g_mask = np.where(sel, dz, 0).sum(axis=(0, 1))
    de = np.where(sel, 0, dz)
    g_embed_w = np.einsum("nld,nlh->dh", c.x, de)
    g_embed_b = de.sum(axis=(0, 1))

    dtype = params.embed_w.dtype
    grads = TinyMaeParams(
        embed_w=g_embed_w,
        embed_b=g_embed_b,
        attn_q=g_q,
        attn_k=g_k,
        attn_v=g_v,
        mask_token=g_mask,
        decode_w=g_decode_w,
        decode_b=g_decode_b,
    )
    return grads.astype(dtype)


def sgd_step(params: TinyMaeParams, grads: TinyMaeParams, lr: float) -> TinyMaeParams:
    return TinyMaeParams(
        **{name: (p - lr * g).astype(p.dtype) for (name, p), g in zip(params.items(), grads.arrays())}
    )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    epochs: int = 200
    batch: int = 16
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    eps: float = 1e-6
    seed: int = 0
    patch_side: int = 8
    d_hidden: int = 16

    def __post_init__(self):
        if not self.lr >= 0:
            raise ParameterError(f"lr must be >= 0, got {self.lr}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch < 1:
            raise ParameterError(f"batch must be >= 1, got {self.batch}")
        if self.d_hidden < 1:
            raise ParameterError(f"d_hidden must be >= 1, got {self.d_hidden}")


def masked_step(params, tokens: TokenBatch, targets: TokenBatch, cfg: MaskingConfig, rng):
    """One loss/gradient evaluation with a freshly drawn mask."""
    m, _ = generate_mask(tokens, cfg, rng)
    pred, cache = forward(params, tokens, m)
    report = mim_loss(pred, targets, m)
    grads = backward(params, cache, mim_loss_grad(pred, targets.tokens, m))
    return report, grads


def evaluate(params: TinyMaeParams, tokens: TokenBatch, targets: TokenBatch, cfg: MaskingConfig, seed: int) -> float:
    """Masked reconstruction loss with masks drawn from ``seed``."""
    m, _ = generate_mask(tokens, cfg, make_rng(seed))
    pred, _ = forward(params, tokens, m)
    return mim_loss(pred, targets, m).value


def train(data, cfg: TrainConfig, params: TinyMaeParams | None = None):
    """SGD over ``data`` (a list of Images). Returns (params, per-epoch mean loss).

    Masks are redrawn for every batch. With lr=0 the parameters are left
    untouched.
    """
    data = list(data)
    if not data:
        raise ParameterError("train needs at least one image")
    if cfg.lr == 0 and cfg.epochs > 0:
        log.warning("lr=0: parameters will not change")
    tokens = patchify(data, cfg.patch_side)
    targets = normalize_targets(tokens, cfg.eps)
    rng = make_rng(cfg.seed)
    if params is None:
        params = TinyMaeParams.init(tokens.shape[2], cfg.d_hidden, rng)
    n = tokens.shape[0]
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch):
            idx = np.sort(order[start : start + cfg.batch])
            # overflow surfaces as non-finite params below
            with np.errstate(over="ignore", invalid="ignore"):
                report, grads = masked_step(params, tokens.take(idx), targets.take(idx), cfg.masking, rng)
                losses.append(report.value)
                if cfg.lr:
                    params = sgd_step(params, grads, cfg.lr)
            if cfg.lr and not params.is_finite():
                raise ParameterError(f"training diverged at epoch {epoch}; lower lr (now {cfg.lr})")
        curve.append(float(np.mean(losses)))
        log.debug("epoch %d loss %.6f", epoch, curve[-1])
    return params, curve


def with_ratio(cfg: TrainConfig, ratio: float) -> TrainConfig:
    """Copy of ``cfg`` at another base ratio.

    delta_r only matters for sbam_amr; other strategies get delta_r=0 so that
    ratios near 0 or 1 stay valid.
    """
    m = cfg.masking
    dr = m.delta_r if m.strategy == "sbam_amr" else 0.0
    return replace(cfg, masking=replace(m, base_ratio=ratio, delta_r=dr))
