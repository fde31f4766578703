"""Block-modulation layer: identity start, hand oracle, causality, gradients."""

import numpy as np
import pytest

from tunet.tensor import Tape, Tensor, grad_check
from tunet.tfilm import TFiLM


def _zeroed_head_layer(channels, blocks, seed=0):
    layer = TFiLM(channels, blocks, rng=np.random.default_rng(seed))
    layer.head.weight.data[:] = 0.0
    layer.head.bias.data[:channels] = 1.0
    layer.head.bias.data[channels:] = 0.0
    return layer


class TestTFiLM:
    def test_identity_modulation(self):
        layer = _zeroed_head_layer(3, 4)
        x = np.random.default_rng(1).normal(size=(3, 16)).astype(np.float32)
        out = layer(Tensor(x))
        np.testing.assert_allclose(out.data, x, atol=1e-7)

    def test_hand_computed_small_case(self):
        # C=1, T=4, B=2: pool = [max(x0,x1), max(x2,x3)], a 1-unit LSTM walks
        # the two blocks, the head maps h -> (gamma, beta).
        layer = TFiLM(1, 2, rng=np.random.default_rng(0))
        layer.lstm.weight.data[:] = np.array(
            [[0.4, 0.1], [-0.3, 0.2], [0.6, -0.5], [0.2, 0.7]], dtype=np.float32
        )
        layer.lstm.bias.data[:] = np.array([0.05, -0.05, 0.1, 0.2], dtype=np.float32)
        layer.head.weight.data[:] = np.array([[0.8], [-0.4]], dtype=np.float32)
        layer.head.bias.data[:] = np.array([1.0, 0.1], dtype=np.float32)

        x = np.array([[0.3, 0.9, -0.2, 0.5]], dtype=np.float32)

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        h_prev, c_prev = 0.0, 0.0
        hs = []
        for p in (0.9, 0.5):
            i = sig(0.4 * p + 0.1 * h_prev + 0.05)
            f = sig(-0.3 * p + 0.2 * h_prev - 0.05)
            g = np.tanh(0.6 * p - 0.5 * h_prev + 0.1)
            o = sig(0.2 * p + 0.7 * h_prev + 0.2)
            c_prev = f * c_prev + i * g
            h_prev = o * np.tanh(c_prev)
            hs.append(h_prev)
        expected = np.empty((1, 4))
        for bidx, h in enumerate(hs):
            gamma = 0.8 * h + 1.0
            beta = -0.4 * h + 0.1
            expected[0, 2 * bidx : 2 * bidx + 2] = gamma * x[0, 2 * bidx : 2 * bidx + 2] + beta

        out = layer(Tensor(x))
        np.testing.assert_allclose(out.data, expected, atol=1e-6)

    def test_shape_preserved_at_model_scale(self):
        layer = TFiLM(64, 64, rng=np.random.default_rng(2))
        x = Tensor(np.random.default_rng(3).normal(size=(64, 2048)).astype(np.float32))
        out = layer(x)
        assert out.shape == (64, 2048)

    def test_shape_preserved_various(self):
        rng = np.random.default_rng(4)
        for c, t, b in [(2, 8, 2), (5, 30, 6), (1, 12, 12)]:
            layer = TFiLM(c, b, rng=rng)
            assert layer(Tensor(rng.normal(size=(c, t)).astype(np.float32))).shape == (c, t)

    def test_block_count_must_divide(self):
        layer = TFiLM(2, 3, rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="does not divide"):
            layer(Tensor(np.zeros((2, 10), dtype=np.float32)))

    def test_causality_across_blocks(self):
        # Perturbing samples inside block b must not change outputs of
        # earlier blocks (the LSTM only runs forward).
        rng = np.random.default_rng(5)
        layer = TFiLM(4, 8, rng=rng)
        x = rng.normal(size=(4, 64)).astype(np.float32)
        base = layer(Tensor(x)).data
        width = 64 // 8
        for b in (3, 5, 7):
            pert = x.copy()
            pert[:, b * width :] += rng.normal(size=(4, 64 - b * width)).astype(np.float32)
            out = layer(Tensor(pert)).data
            np.testing.assert_array_equal(out[:, : b * width], base[:, : b * width])
            assert not np.allclose(out[:, b * width :], base[:, b * width :])

    def test_gradcheck(self):
        rng = np.random.default_rng(6)
        layer = TFiLM(2, 4, rng=rng, dtype=np.float64)
        x = rng.normal(size=(2, 16))

        def f(leaf):
            return (layer(leaf) ** 2.0).sum()

        assert grad_check(f, Tensor(x)).max_rel_error < 1e-4

        def f_w(leaf):
            saved = layer.lstm.weight
            layer.lstm.weight = leaf
            try:
                return (layer(Tensor(x, dtype=np.float64)) ** 2.0).sum()
            finally:
                layer.lstm.weight = saved

        assert grad_check(f_w, layer.lstm.weight).max_rel_error < 1e-4
