"""WAV input/output: 16-bit PCM mono at 8 or 16 kHz."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

__all__ = ["AudioClip", "load_wav", "save_wav"]

SUPPORTED_RATES = (8000, 16000)
SCALE = 32768.0


@dataclass
class AudioClip:
    samples: np.ndarray  # float in [-1, 1)
    sample_rate: int

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def load_wav(path) -> AudioClip:
    """Read a PCM-16 mono RIFF/WAVE file, scaling samples by 1/32768."""
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            comp = fh.getcomptype()
            frames = fh.readframes(fh.getnframes())
    except wave.Error as e:
        raise ValueError(f"{path}: not a readable RIFF/WAVE file ({e})") from e
    if comp != "NONE":
        raise ValueError(f"{path}: compression type {comp!r} unsupported, need PCM")
    if channels != 1:
        raise ValueError(f"{path}: channel count {channels} unsupported, need mono")
    if width != 2:
        raise ValueError(f"{path}: sample width {8 * width} bits unsupported, need 16-bit")
    if rate not in SUPPORTED_RATES:
        raise ValueError(f"{path}: sample rate {rate} unsupported, need one of {SUPPORTED_RATES}")
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float32) / SCALE
    return AudioClip(samples=samples, sample_rate=rate)


def save_wav(clip: AudioClip | np.ndarray, path, sample_rate: int | None = None) -> None:
    """Write PCM-16 mono; the exact inverse of :func:`load_wav` with clamping."""
    if isinstance(clip, AudioClip):
        samples, rate = clip.samples, clip.sample_rate
    else:
        if sample_rate is None:
            raise ValueError("sample_rate required when saving a bare array")
        samples, rate = np.asarray(clip), sample_rate
    if rate not in SUPPORTED_RATES:
        raise ValueError(f"sample rate {rate} unsupported, need one of {SUPPORTED_RATES}")
    ints = np.clip(np.round(samples * SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(ints.tobytes())
