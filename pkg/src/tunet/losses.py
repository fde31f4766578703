"""Training objectives: multi-resolution mel-STFT loss plus weighted MSE.

The spectral term runs on the gradient tape: framing and the real FFT are
fused primitives (FFT forward, scaled inverse-FFT adjoint), everything else
is composed from tensor primitives. Resolutions follow the common
multi-resolution STFT defaults; the mel projection uses 128 triangular
bands by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tunet import tensor as tt
from tunet.tensor import Tensor, record
from tunet.dsp import mel_filterbank, _padded_window

__all__ = ["MRConfig", "mr_stft_mel_loss", "mse_loss", "total_loss", "DEFAULT_ALPHA"]

DEFAULT_ALPHA = 10000.0


@dataclass(frozen=True)
class MRConfig:
    """Multi-resolution analysis settings for the spectral loss."""

    fft_sizes: tuple[int, ...] = (1024, 2048, 512)
    hops: tuple[int, ...] = (120, 240, 50)
    win_lengths: tuple[int, ...] = (600, 1200, 240)
    n_mels: int = 128
    sample_rate: int = 16000
    log_floor: float = 1e-8

    def __post_init__(self):
        if not len(self.fft_sizes) == len(self.hops) == len(self.win_lengths):
            raise ValueError("resolution lists must have equal length")
        for nfft, win in zip(self.fft_sizes, self.win_lengths):
            if win > nfft:
                raise ValueError(f"win_length {win} exceeds nfft {nfft}")


# -- fused tape primitives ---------------------------------------------


def frame_signal(x: Tensor, length: int, hop: int) -> Tensor:
    """Overlapping frames of a 1-D tensor: ``(L,) -> (n_frames, length)``."""
    (n,) = x.shape
    n_frames = (n - length) // hop + 1
    if n_frames < 1:
        raise ValueError(f"signal of length {n} too short for frame length {length}")
    s = x.data.strides[0]
    frames = np.lib.stride_tricks.as_strided(
        x.data, shape=(n_frames, length), strides=(hop * s, s)
    ).copy()
    out = Tensor(frames)

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        for f in range(n_frames):
            gx[f * hop : f * hop + length] += g[f]
        return (gx,)

    return record(out, (x,), backward_fn)


def rfft_pair(frames: Tensor, nfft: int) -> Tensor:
    """Real FFT of each row, stacked as ``(2, n_frames, nfft//2 + 1)`` re/im."""
    spec = np.fft.rfft(frames.data, n=nfft, axis=1)
    out = Tensor(np.stack([spec.real, spec.imag]).astype(frames.data.dtype))

    def backward_fn(g):
        gc = g[0] + 1j * g[1]
        gc[:, 1:-1] *= 0.5  # interior bins appear twice in the real signal
        gx = nfft * np.fft.irfft(gc, n=nfft, axis=1)
        return (gx[:, : frames.shape[1]].astype(frames.data.dtype),)

    return record(out, (frames,), backward_fn)


# -- loss assembly ------------------------------------------------------


def _reflect_pad(x: Tensor, amount: int) -> Tensor:
    left = x[amount:0:-1]
    right = x[-2 : -amount - 2 : -1]
    return tt.concat([left, x, right], axis=0)


_FB_CACHE: dict[tuple, np.ndarray] = {}


def _fb(sample_rate: int, nfft: int, n_mels: int) -> np.ndarray:
    key = (sample_rate, nfft, n_mels)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = mel_filterbank(sample_rate, nfft, n_mels)
    return _FB_CACHE[key]


def _mel_magnitude(x: Tensor, nfft: int, hop: int, win: int, cfg: MRConfig) -> Tensor:
    xp = _reflect_pad(x, nfft // 2)
    frames = frame_signal(xp, nfft, hop)
    windowed = frames * Tensor(_padded_window(nfft, win).astype(x.dtype))
    spec = rfft_pair(windowed, nfft)
    re, im = spec[0], spec[1]
    # Tiny floor keeps the gradient finite on exactly-silent frames.
    mag = tt.sqrt(re * re + im * im + 1e-24)
    return tt.matmul(mag, Tensor(_fb(cfg.sample_rate, nfft, cfg.n_mels).T.astype(x.dtype)))


def _floored(x: Tensor, floor: float) -> Tensor:
    return tt.relu(x - floor) + floor


def mr_stft_mel_loss(y_hat: Tensor, y, cfg: MRConfig | None = None) -> Tensor:
    """Spectral convergence + log-magnitude L1 on mel spectra, resolution-averaged."""
    cfg = cfg if cfg is not None else MRConfig()
    y = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=y_hat.dtype))
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.shape} vs {y.shape}")
    y_hat = tt.reshape(y_hat, (-1,))
    y = tt.reshape(y, (-1,))

    total = None
    for nfft, hop, win in zip(cfg.fft_sizes, cfg.hops, cfg.win_lengths):
        m_ref = _mel_magnitude(y, nfft, hop, win, cfg)
        m_hat = _mel_magnitude(y_hat, nfft, hop, win, cfg)
        diff = m_ref - m_hat
        sc = tt.sqrt((diff * diff).sum()) / tt.sqrt((m_ref * m_ref).sum())
        l1 = tt.absolute(
            tt.log(_floored(m_ref, cfg.log_floor)) - tt.log(_floored(m_hat, cfg.log_floor))
        ).mean()
        term = sc + l1
        total = term if total is None else total + term
    return total * (1.0 / len(cfg.fft_sizes))


def mse_loss(y_hat: Tensor, y) -> Tensor:
    y = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=y_hat.dtype))
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.shape} vs {y.shape}")
    diff = y_hat - y
    return (diff * diff).mean()


def total_loss(y_hat: Tensor, y, alpha: float = DEFAULT_ALPHA, cfg: MRConfig | None = None) -> Tensor:
    """Spectral loss plus ``alpha`` times MSE (the training objective)."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    loss = mr_stft_mel_loss(y_hat, y, cfg)
    if alpha:
        loss = loss + mse_loss(y_hat, y) * alpha
    return loss
