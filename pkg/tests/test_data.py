"""WAV round trips, dataset construction, masking."""

import wave

import numpy as np
import pytest

from tunet.audio_io import AudioClip, load_wav, save_wav
from tunet.data import (
    make_bwe_dataset,
    make_msm_segments,
    mask_blocks,
    segment_signal,
    load_clips,
)
from tunet.dsp import downsample2, upsample2
from tunet.synthetic import synthetic_speech


class TestWavIO:
    def test_round_trip_quantization_bound(self, tmp_path):
        x = np.random.default_rng(0).uniform(-0.9, 0.9, size=16000).astype(np.float32)
        path = tmp_path / "x.wav"
        save_wav(AudioClip(samples=x, sample_rate=16000), path)
        back = load_wav(path)
        assert back.sample_rate == 16000
        assert np.abs(back.samples - x).max() <= 1.0 / 32768.0

    def test_one_second_file_has_sixteen_thousand_samples(self, tmp_path):
        path = tmp_path / "one_second.wav"
        save_wav(AudioClip(samples=np.zeros(16000, dtype=np.float32), sample_rate=16000), path)
        assert load_wav(path).samples.size == 16000

    def test_stereo_rejected(self, tmp_path):
        path = tmp_path / "stereo.wav"
        with wave.open(str(path), "wb") as fh:
            fh.setnchannels(2)
            fh.setsampwidth(2)
            fh.setframerate(16000)
            fh.writeframes(np.zeros(400, dtype="<i2").tobytes())
        with pytest.raises(ValueError, match="channel count 2"):
            load_wav(path)

    def test_wrong_rate_rejected(self, tmp_path):
        path = tmp_path / "cd.wav"
        with wave.open(str(path), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(44100)
            fh.writeframes(np.zeros(100, dtype="<i2").tobytes())
        with pytest.raises(ValueError, match="sample rate 44100"):
            load_wav(path)

    def test_eight_bit_rejected(self, tmp_path):
        path = tmp_path / "u8.wav"
        with wave.open(str(path), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(1)
            fh.setframerate(16000)
            fh.writeframes(bytes(100))
        with pytest.raises(ValueError, match="sample width 8"):
            load_wav(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "noise.wav"
        path.write_bytes(b"definitely not RIFF")
        with pytest.raises(ValueError, match="RIFF"):
            load_wav(path)


class TestSegmentation:
    def test_16384_samples_make_three_offsets(self):
        segs = segment_signal(np.arange(16384, dtype=np.float32))
        assert [s.offset for s in segs] == [0, 4096, 8192]
        assert all(s.samples.size == 8192 for s in segs)
        assert not any(s.padded for s in segs)

    def test_short_file_padded_and_flagged(self):
        segs = segment_signal(np.ones(5000, dtype=np.float32))
        assert len(segs) == 1
        assert segs[0].padded
        assert segs[0].samples.size == 8192
        assert np.all(segs[0].samples[5000:] == 0.0)


class TestBweDataset:
    def _clips(self, n=2, seconds=1.1):
        return {f"c{i}.wav": synthetic_speech(seconds, seed=i) for i in range(n)}

    def test_pair_counts_and_shapes(self):
        clips = {"a.wav": synthetic_speech(16384 / 16000.0, seed=0)[:16384]}
        pairs = make_bwe_dataset(clips, mode="single")
        assert len(pairs) == 3
        for p in pairs:
            assert p.nb_upsampled.shape == (8192,)
            assert p.wb.shape == (8192,)

    def test_single_mode_reuses_one_filter(self):
        clips = self._clips()
        a = make_bwe_dataset(clips, mode="single")
        b = make_bwe_dataset(clips, mode="single")
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.nb_upsampled, pb.nb_upsampled)

    def test_multi_mode_reproducible_per_seed(self):
        clips = self._clips()
        a = make_bwe_dataset(clips, mode="multi", rng=np.random.default_rng(5))
        b = make_bwe_dataset(clips, mode="multi", rng=np.random.default_rng(5))
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.nb_upsampled, pb.nb_upsampled)
        c = make_bwe_dataset(clips, mode="multi", rng=np.random.default_rng(6))
        assert any(
            not np.array_equal(pa.nb_upsampled, pc.nb_upsampled) for pa, pc in zip(a, c)
        )

    def test_pairs_aligned_by_construction(self):
        # The narrowband member is exactly the down/up-sampled wideband
        # member once whole-file processing is replayed at pair offsets.
        clips = {"a.wav": synthetic_speech(1.5, seed=3)}
        pairs = make_bwe_dataset(clips, mode="single")
        wb = np.asarray(clips["a.wav"], dtype=np.float64)
        chain = upsample2(downsample2(wb))
        for p in pairs:
            np.testing.assert_allclose(
                p.nb_upsampled,
                chain[p.offset : p.offset + 8192].astype(np.float32),
                atol=1e-7,
            )

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="unknown augmentation"):
            make_bwe_dataset(self._clips(1), mode="fancy")


class TestMasking:
    def test_rate_zero_identity(self):
        x = np.random.default_rng(0).normal(size=8192).astype(np.float32)
        masked, mask = mask_blocks(x, rate=0.0)
        np.testing.assert_array_equal(masked, x)
        assert not mask.any()

    def test_rate_one_all_zero(self):
        x = np.random.default_rng(1).normal(size=8192).astype(np.float32)
        masked, mask = mask_blocks(x, rate=1.0, rng=np.random.default_rng(0))
        assert np.all(masked == 0.0)
        assert mask.all()

    def test_default_rate_zeroes_exactly_six_blocks(self):
        x = np.ones(8192, dtype=np.float32)
        for seed in range(100):
            masked, mask = mask_blocks(x, rng=np.random.default_rng(seed))
            assert mask.sum() == 6 * 256 == 1536
            zero_blocks = [
                b for b in range(32) if np.all(masked[b * 256 : (b + 1) * 256] == 0.0)
            ]
            assert len(zero_blocks) == 6

    def test_block_must_divide(self):
        with pytest.raises(ValueError, match="does not divide"):
            mask_blocks(np.zeros(100), block=256, rng=np.random.default_rng(0))


class TestLoadClips:
    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no .wav files"):
            load_clips(tmp_path)

    def test_loads_and_checks_rate(self, tmp_path):
        save_wav(AudioClip(np.zeros(4000, dtype=np.float32), 8000), tmp_path / "nb.wav")
        with pytest.raises(ValueError, match="expected 16000"):
            load_clips(tmp_path, sample_rate=16000)
        clips = load_clips(tmp_path, sample_rate=8000)
        assert list(clips) == ["nb.wav"]


class TestMsmSegments:
    def test_segments_from_corpus(self):
        clips = {"a.wav": synthetic_speech(1.1, seed=0), "b.wav": synthetic_speech(0.4, seed=1)}
        segs = make_msm_segments(clips)
        sources = {s.source for s in segs}
        assert sources == {"a.wav", "b.wav"}
        assert any(s.padded for s in segs)  # the 0.4 s clip is shorter than one window
