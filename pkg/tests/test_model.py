"""End-to-end model assembly: counts, shapes, skips, determinism, gradients."""

import numpy as np
import pytest

from tunet.tensor import Tensor, Tape, backward, grad_check
from tunet.model import TUNet, TUNetConfig, build_model, count_parameters
from tunet.performer import PerformerConfig


def tiny_config(width_divisor=8, length=1024):
    cfg = TUNetConfig().scaled(width_divisor)
    return TUNetConfig(
        input_length=length,
        encoder=cfg.encoder,
        decoder=cfg.decoder,
        performer=PerformerConfig(
            layers=cfg.performer.layers,
            heads=cfg.performer.heads,
            head_dim=cfg.performer.head_dim,
            model_dim=cfg.performer.model_dim,
            ff_mult=cfg.performer.ff_mult,
            random_features=cfg.performer.random_features,
            local_window=max(length // 64 // 8, 1),
        ),
        tfilm_blocks=min(cfg.tfilm_blocks, length // 64),
    )


class TestBuild:
    def test_default_parameter_count_in_range(self):
        model = build_model(seed=0)
        total, breakdown = count_parameters(model)
        assert 2_300_000 <= total <= 3_500_000
        assert sum(breakdown.values()) == total

    def test_count_is_pure_function_of_config(self):
        a = count_parameters(build_model(seed=0))[0]
        b = count_parameters(build_model(seed=99))[0]
        assert a == b

    def test_width_override_shrinks_conv_count_quadratically(self):
        base = count_parameters(build_model())[1]
        small = count_parameters(build_model(TUNetConfig().scaled(8)))[1]
        # Interior convs have both fan-in and fan-out divided by 8.
        for block in ("encoder.conv2", "encoder.conv3", "decoder.conv1", "decoder.conv2"):
            ratio = base[block] / small[block]
            assert 50 <= ratio <= 70  # ~64 with bias terms

    def test_zero_performer_layers_drop_exact_block_total(self):
        full = count_parameters(build_model())[1]
        cfg = TUNetConfig(performer=PerformerConfig(layers=0))
        reduced_total, reduced = count_parameters(build_model(cfg))
        performer_total = sum(v for k, v in full.items() if k.startswith("performer"))
        assert sum(full.values()) - reduced_total == performer_total
        assert not any(k.startswith("performer.block") for k in reduced)

    def test_bad_geometry_names_stage(self):
        with pytest.raises(ValueError, match="encoder stage 2"):
            TUNet(
                TUNetConfig(
                    encoder=((64, 66), (128, 17), (256, 8)),
                    performer=PerformerConfig(),
                )
            )

    def test_bottleneck_width_must_match_model_dim(self):
        with pytest.raises(ValueError, match="model_dim"):
            TUNetConfig(encoder=((64, 66), (128, 18), (512, 8)))


class TestForward:
    def test_shape_8192_to_8192(self):
        model = build_model(seed=1)
        x = np.random.default_rng(0).normal(size=8192).astype(np.float32) * 0.1
        assert model.infer(x).shape == (8192,)

    def test_wrong_length_rejected(self):
        model = build_model(TUNetConfig().scaled(8), seed=0)
        with pytest.raises(ValueError, match="framing"):
            model.infer(np.zeros(4096, dtype=np.float32))

    def test_zero_weights_except_skip_reproduces_input(self):
        model = build_model(tiny_config(), seed=0)
        for p in model.parameters().values():
            p.data[:] = 0.0
        x = np.random.default_rng(1).normal(size=1024).astype(np.float32) * 0.3
        np.testing.assert_allclose(model.infer(x), x, atol=1e-7)

    def test_deterministic_forward(self):
        model = build_model(seed=2)
        x = np.random.default_rng(2).normal(size=8192).astype(np.float32) * 0.1
        assert np.array_equal(model.infer(x), model.infer(x))

    def test_output_bounded_by_tanh_plus_skip(self):
        model = build_model(tiny_config(), seed=3)
        x = np.random.default_rng(3).uniform(-1, 1, size=1024).astype(np.float32)
        out = model.infer(x)
        assert np.all(np.abs(out) <= 1.0 + np.abs(x).max() + 1e-6)

    def test_pre_skip_output_in_tanh_range(self):
        cfg = tiny_config()
        cfg = TUNetConfig(
            input_length=cfg.input_length, encoder=cfg.encoder, decoder=cfg.decoder,
            performer=cfg.performer, tfilm_blocks=cfg.tfilm_blocks, skip_input=False,
        )
        model = build_model(cfg, seed=4)
        x = np.random.default_rng(4).uniform(-1, 1, size=1024).astype(np.float32)
        out = model.infer(x)
        assert np.all(out >= -1.0) and np.all(out <= 1.0)

    def test_removing_input_skip_changes_output(self):
        cfg = tiny_config()
        base = build_model(cfg, seed=5)
        no_skip_cfg = TUNetConfig(
            input_length=cfg.input_length, encoder=cfg.encoder, decoder=cfg.decoder,
            performer=cfg.performer, tfilm_blocks=cfg.tfilm_blocks, skip_input=False,
        )
        stripped = build_model(no_skip_cfg, seed=5)
        x = np.random.default_rng(5).normal(size=1024).astype(np.float32) * 0.3
        a, b = base.infer(x), stripped.infer(x)
        assert not np.allclose(a, b)
        np.testing.assert_allclose(a - x, b, atol=1e-6)

    def test_skip_junction_variants_differ(self):
        cfg = tiny_config()
        pre = build_model(cfg, seed=6)
        post_cfg = TUNetConfig(
            input_length=cfg.input_length, encoder=cfg.encoder, decoder=cfg.decoder,
            performer=cfg.performer, tfilm_blocks=cfg.tfilm_blocks, skip_junction="post_tfilm",
        )
        post = build_model(post_cfg, seed=6)
        x = np.random.default_rng(6).normal(size=1024).astype(np.float32) * 0.3
        assert not np.allclose(pre.infer(x), post.infer(x))


class TestGradients:
    def test_end_to_end_gradcheck_downscaled(self):
        model = build_model(tiny_config(), seed=7, dtype=np.float64)
        x = np.random.default_rng(7).normal(size=1024) * 0.3

        def f(leaf):
            out = model.forward(leaf.reshape(1, -1))
            return (out * out).mean()

        res = grad_check(f, Tensor(x), sample=50, rng=np.random.default_rng(1))
        assert res.nan_count == 0
        assert res.max_rel_error < 1e-4

    def test_parameter_gradients_flow_everywhere(self):
        model = build_model(tiny_config(), seed=8, dtype=np.float64)
        x = Tensor(np.random.default_rng(8).normal(size=(1, 1024)) * 0.3)
        with Tape():
            out = model.forward(x)
            backward((out * out).mean())
        missing = [n for n, p in model.parameters().items() if p.grad is None]
        assert missing == []
        zero = [
            n for n, p in model.parameters().items()
            if p.grad is not None and not np.any(p.grad)
        ]
        assert zero == []


class TestPrecisionSwitch:
    def test_astype_round_trip_values(self):
        model = build_model(tiny_config(), seed=9)
        x = np.random.default_rng(9).normal(size=1024).astype(np.float32) * 0.2
        out32 = model.infer(x)
        out64 = model.astype(np.float64).infer(x.astype(np.float64))
        np.testing.assert_allclose(out32, out64, atol=1e-4)
