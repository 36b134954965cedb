import math

import numpy as np
import pytest

from oracles import central_diff, softmax_row
from sbam.errors import ParameterError
from sbam.masking import MaskingConfig, MaskSet
from sbam.mimloss import mim_loss, mim_loss_grad
from sbam.numerics import make_rng
from sbam.synthetic import planted_object_images
from sbam.trainer import TinyMaeParams, TrainConfig, backward, forward, train


def random_params(d_in, h, seed, dtype=np.float64):
    return TinyMaeParams.init(d_in, h, make_rng(seed), dtype=dtype)


def scalar_forward(p, x, masked):
    """Loop-level forward pass for one sample; x and the weights as nested lists."""
    L, H = len(x), len(p["embed_b"])
    d_in = len(x[0])
    z = []
    for i in range(L):
        if masked[i]:
            z.append(list(p["mask_token"]))
        else:
            z.append([sum(x[i][d] * p["embed_w"][d][h] for d in range(d_in)) + p["embed_b"][h] for h in range(H)])

    def proj(w):
        return [[sum(z[i][a] * w[a][b] for a in range(H)) for b in range(H)] for i in range(L)]

    q, k, v = proj(p["attn_q"]), proj(p["attn_k"]), proj(p["attn_v"])
    out = []
    for i in range(L):
        logits = [sum(q[i][a] * k[j][a] for a in range(H)) / math.sqrt(H) for j in range(L)]
        w = softmax_row(logits)
        a = [sum(w[j] * v[j][b] for j in range(L)) for b in range(H)]
        out.append([sum(a[b] * p["decode_w"][b][d] for b in range(H)) + p["decode_b"][d] for d in range(d_in)])
    return out


class TestForward:
    def test_zero_params(self):
        p = TinyMaeParams.zeros_like(random_params(4, 3, 0))
        x = np.random.default_rng(0).random((2, 5, 4))
        pred, _ = forward(p, x, MaskSet.from_mask(np.zeros((2, 5))))
        assert not pred.any()

    def test_identity_weights_match_scalar_oracle(self):
        eye = np.eye(2)
        p = TinyMaeParams(eye, np.zeros(2), eye, eye, eye, np.array([0.3, -0.2]), eye, np.zeros(2))
        x = np.array([[[0.2, 0.9], [0.7, 0.1]]])
        pred, _ = forward(p, x, MaskSet.from_mask([[0, 0]]))
        ref = scalar_forward({k: v.tolist() for k, v in p.items()}, x[0].tolist(), [0, 0])
        np.testing.assert_allclose(pred[0], ref, rtol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_params_match_scalar_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p = random_params(4, 3, seed)
        p.embed_b[:] = rng.normal(size=3)
        p.decode_b[:] = rng.normal(size=4)
        x = rng.random((1, 5, 4))
        masked = rng.integers(0, 2, 5)
        pred, _ = forward(p, x, MaskSet.from_mask(masked[None]))
        ref = scalar_forward({k: v.tolist() for k, v in p.items()}, x[0].tolist(), masked.tolist())
        np.testing.assert_allclose(pred[0], ref, rtol=1e-10, atol=1e-12)

    def test_batch_equivariance(self):
        rng = np.random.default_rng(1)
        p = random_params(4, 4, 1)
        x = rng.random((2, 4, 4))
        m = np.array([[1, 0, 0, 1], [0, 1, 0, 0]])
        a, _ = forward(p, x, MaskSet.from_mask(m))
        b, _ = forward(p, x[::-1], MaskSet.from_mask(m[::-1]))
        np.testing.assert_allclose(a[::-1], b, rtol=1e-12)


def loss_setup(seed, n=1, L=4, d_in=4, h=4):
    rng = np.random.default_rng(seed)
    p = random_params(d_in, h, seed)
    p.embed_b[:] = rng.normal(scale=0.1, size=h)
    p.decode_b[:] = rng.normal(scale=0.1, size=d_in)
    p.mask_token[:] = rng.normal(scale=0.5, size=h)
    x = rng.random((n, L, d_in))
    target = rng.normal(size=(n, L, d_in))
    m = rng.integers(0, 2, size=(n, L))
    m[0, 0], m[0, -1] = 1, 0  # at least one masked and one visible token
    return p, x, target, MaskSet.from_mask(m)


class TestBackward:
    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        p, x, target, m = loss_setup(seed)

        def loss():
            return mim_loss(forward(p, x, m)[0], target, m).value

        pred, cache = forward(p, x, m)
        grads = backward(p, cache, mim_loss_grad(pred, target, m))
        for (name, arr), g in zip(p.items(), grads.arrays()):
            fd = central_diff(loss, arr, h=1e-3)
            np.testing.assert_allclose(g, fd, rtol=1e-3, atol=1e-7, err_msg=name)

    def test_batched_finite_differences(self):
        p, x, target, m = loss_setup(100, n=2, L=5, d_in=3, h=2)

        def loss():
            return mim_loss(forward(p, x, m)[0], target, m).value

        pred, cache = forward(p, x, m)
        grads = backward(p, cache, mim_loss_grad(pred, target, m))
        for (name, arr), g in zip(p.items(), grads.arrays()):
            np.testing.assert_allclose(g, central_diff(loss, arr), rtol=1e-3, atol=1e-7, err_msg=name)

    def test_zero_upstream(self):
        p, x, _, m = loss_setup(0)
        _, cache = forward(p, x, m)
        grads = backward(p, cache, np.zeros((1, 4, 4)))
        assert all(not g.any() for g in grads.arrays())

    def test_mask_token_unused_without_masking(self):
        p, x, target, _ = loss_setup(0)
        m = MaskSet.from_mask(np.zeros((1, 4)))
        pred, cache = forward(p, x, m)
        grads = backward(p, cache, np.ones_like(pred))
        assert not grads.mask_token.any()
        assert grads.embed_w.any()


class TestTrain:
    def test_lr_zero_keeps_params(self):
        images, _ = planted_object_images(8, seed=0)
        init = TinyMaeParams.init(64, 16, make_rng(5))
        params, curve = train(images, TrainConfig(lr=0.0, epochs=3), params=init.copy())
        assert len(curve) == 3
        for a, b in zip(init.arrays(), params.arrays()):
            assert a.tobytes() == b.tobytes()

    def test_deterministic(self):
        images, _ = planted_object_images(16, seed=0)
        cfg = TrainConfig(epochs=5, masking=MaskingConfig(strategy="sbam_amr"))
        _, a = train(images, cfg)
        _, b = train(images, cfg)
        assert a == b

    def test_loss_halves(self):
        images, _ = planted_object_images(64, seed=1)
        _, curve = train(images, TrainConfig(epochs=200, seed=0))
        assert curve[-1] < 0.5 * curve[0]

    def test_strategies_differ(self):
        images, _ = planted_object_images(16, seed=2)
        _, a = train(images, TrainConfig(epochs=10, masking=MaskingConfig(strategy="random")))
        _, b = train(images, TrainConfig(epochs=10, masking=MaskingConfig(strategy="sbam")))
        assert a != b

    def test_params_stay_float32(self):
        images, _ = planted_object_images(4, seed=0)
        params, _ = train(images, TrainConfig(epochs=2))
        assert all(a.dtype == np.float32 for a in params.arrays())
        assert params.is_finite()

    def test_empty_data(self):
        with pytest.raises(ParameterError):
            train([], TrainConfig())

    @pytest.mark.parametrize("kwargs", [{"lr": -1}, {"epochs": -1}, {"batch": 0}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ParameterError):
            TrainConfig(**kwargs)

    def test_divergence_detected(self):
        images, _ = planted_object_images(8, seed=0)
        with pytest.raises(ParameterError, match="diverged"):
            train(images, TrainConfig(lr=1e6, epochs=5))
