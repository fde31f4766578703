"""Synthetic speech-like signals for desk-scale experiments and demos.

Alternates voiced stretches (harmonic stacks with a gliding fundamental and
-6 dB/octave tilt), unvoiced bursts (high-tilted noise) and short silences.
Harmonics extend to 7.5 kHz so the 4-8 kHz band carries real structure for
bandwidth-extension experiments.
"""

from __future__ import annotations

import numpy as np

__all__ = ["synthetic_speech", "synthetic_corpus"]


def _voiced(n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / sr
    f0_start = rng.uniform(90.0, 220.0)
    f0_end = f0_start * rng.uniform(0.8, 1.25)
    f0 = np.linspace(f0_start, f0_end, n)
    phase = 2.0 * np.pi * np.cumsum(f0) / sr
    out = np.zeros(n)
    h = 1
    while h * max(f0_start, f0_end) < 7500.0:
        amp = h ** -1.0 * rng.uniform(0.6, 1.0)
        out += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
        h += 1
    # Mild high-band shimmer so harmonics do not fully determine the band.
    noise = rng.normal(size=n)
    out += 0.02 * (noise - np.convolve(noise, np.ones(8) / 8.0, mode="same"))
    return out


def _unvoiced(n: int, rng: np.random.Generator) -> np.ndarray:
    noise = rng.normal(size=n)
    smooth = np.convolve(noise, np.ones(4) / 4.0, mode="same")
    return 1.5 * (noise - smooth)  # first-difference-like tilt toward high band


def _envelope(n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    attack = max(int(0.01 * sr), 1)
    env = np.ones(n)
    env[:attack] = np.linspace(0.0, 1.0, attack)
    env[-attack:] = np.linspace(1.0, 0.0, attack)
    return env * rng.uniform(0.5, 1.0)


def synthetic_speech(duration: float, sample_rate: int = 16000, seed: int = 0) -> np.ndarray:
    """One mono utterance of roughly ``duration`` seconds, peak 0.7."""
    rng = np.random.default_rng(seed)
    total = int(duration * sample_rate)
    out = np.zeros(total)
    pos = 0
    while pos < total:
        kind = rng.choice(["voiced", "unvoiced", "silence"], p=[0.6, 0.3, 0.1])
        n = min(int(rng.uniform(0.06, 0.22) * sample_rate), total - pos)
        if n < 32:
            break
        if kind == "voiced":
            seg = _voiced(n, sample_rate, rng) * _envelope(n, sample_rate, rng)
        elif kind == "unvoiced":
            seg = _unvoiced(n, rng) * _envelope(n, sample_rate, rng) * 0.4
        else:
            seg = np.zeros(n)
        out[pos : pos + n] = seg
        pos += n
    peak = np.abs(out).max()
    if peak > 0:
        out *= 0.7 / peak
    return out.astype(np.float32)


def synthetic_corpus(
    n_clips: int, duration: float = 2.0, sample_rate: int = 16000, seed: int = 0
) -> dict[str, np.ndarray]:
    """Named clip set, deterministic in ``seed``."""
    return {
        f"clip{i:03d}.wav": synthetic_speech(duration, sample_rate, seed=seed * 1000 + i)
        for i in range(n_clips)
    }
