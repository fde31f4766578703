"""Block-online streaming: partition of unity, alignment, latency reporting."""

import numpy as np
import pytest

from tunet.streaming import StreamSession, stream_apply, stream_process, synthesis_window
from tunet.model import build_model
from tests.test_model import tiny_config


class TestSynthesisWindow:
    def test_partition_of_unity(self):
        for window, hop in [(8192, 1024), (1024, 128), (64, 8), (512, 256)]:
            w = synthesis_window(window, hop)
            cover = np.zeros(3 * window)
            for start in range(0, cover.size - window + 1, hop):
                cover[start : start + window] += w
            steady = cover[window : 2 * window]
            np.testing.assert_allclose(steady, 1.0, atol=1e-12)

    def test_hop_must_divide(self):
        with pytest.raises(ValueError, match="divide"):
            synthesis_window(100, 30)


class TestIdentityReconstruction:
    def test_identity_model_reconstructs_input(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=50_000).astype(np.float32) * 0.5
        out, _ = stream_apply(lambda w: w, x)
        assert out.shape == x.shape
        np.testing.assert_allclose(out, x, atol=1e-6)

    def test_zero_input_zero_output(self):
        out, _ = stream_apply(lambda w: w, np.zeros(20_000, dtype=np.float32))
        np.testing.assert_array_equal(out, 0.0)

    def test_short_input_padded_and_trimmed(self):
        x = np.random.default_rng(1).normal(size=500).astype(np.float32)
        out, _ = stream_apply(lambda w: w, x)
        assert out.shape == x.shape
        np.testing.assert_allclose(out, x, atol=1e-6)

    def test_ragged_pushes_equal_bulk_result(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=30_000).astype(np.float32)
        bulk, _ = stream_apply(lambda w: w, x)

        session = StreamSession(lambda w: w)
        pieces = []
        i = 0
        while i < x.size:
            n = int(rng.integers(1, 5000))
            pieces.append(session.push(x[i : i + n]))
            i += n
        pieces.append(session.flush())
        chunked = np.concatenate(pieces)
        np.testing.assert_array_equal(bulk, chunked)

    def test_generator_interface(self):
        x = np.random.default_rng(3).normal(size=12_000).astype(np.float32)
        blocks = [x[i : i + 1000] for i in range(0, x.size, 1000)]
        out = np.concatenate(list(stream_process(iter(blocks), lambda w: w)))
        assert out.shape == x.shape
        np.testing.assert_allclose(out, x, atol=1e-6)


class TestModelStreaming:
    def test_chunks_match_offline_forward(self):
        model = build_model(tiny_config(width_divisor=8, length=1024), seed=0)
        captured = []
        session = StreamSession(
            model.infer, window=1024, hop=128,
            chunk_hook=lambda win, raw: captured.append((win, raw)),
        )
        x = np.random.default_rng(4).normal(size=4096).astype(np.float32) * 0.3
        session.push(x)
        session.flush()
        assert len(captured) >= 4
        for win, raw in captured[:6]:
            np.testing.assert_allclose(raw, model.infer(win), atol=1e-6)

    def test_latencies_recorded(self):
        model = build_model(tiny_config(width_divisor=8, length=1024), seed=1)
        session = StreamSession(model.infer, window=1024, hop=128)
        session.push(np.zeros(2048, dtype=np.float32))
        assert len(session.chunk_latencies_ms) == 2048 // 128
        assert all(t > 0 for t in session.chunk_latencies_ms)

    def test_output_length_accounting(self):
        model = build_model(tiny_config(width_divisor=8, length=1024), seed=2)
        x = np.random.default_rng(5).normal(size=5000).astype(np.float32) * 0.2
        out, lat = stream_apply(model.infer, x, window=1024, hop=128)
        assert out.shape == x.shape
        assert len(lat) >= 5000 // 128
