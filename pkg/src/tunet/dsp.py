"""Signal chain: Chebyshev Type I design, resampling, STFT, mel filterbank.

Filtering is causal by default (narrowband audio arrives from codecs with
whatever delay its filters impose); a zero-phase mode exists for
experiments. Downsampling applies a Chebyshev anti-aliasing filter before
decimation; upsampling zero-stuffs and interpolates with a Kaiser-windowed
sinc whose integer group delay is compensated, so a round trip stays
sample-aligned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import sosfilt, sosfiltfilt

__all__ = [
    "FilterSpec",
    "Spectrogram",
    "cheby1_design",
    "sos_filter",
    "downsample2",
    "upsample2",
    "downsample2_sinc",
    "random_filter_spec",
    "stft",
    "mel_filterbank",
    "mel_project",
    "hann_window",
    "frequency_response",
    "DEFAULT_FILTER",
]


@dataclass(frozen=True)
class FilterSpec:
    """Chebyshev Type I low-pass and its realized biquad cascade."""

    order: int
    ripple_db: float
    cutoff: float  # normalized to Nyquist, 0 < cutoff < 1
    sos: np.ndarray  # (n_sections, 6)

    def pole_radii(self) -> np.ndarray:
        radii = []
        for b0, b1, b2, a0, a1, a2 in self.sos:
            roots = np.roots([a0, a1, a2])
            radii.extend(np.abs(roots))
        return np.asarray(radii)

    @property
    def stable(self) -> bool:
        return bool(np.all(self.pole_radii() < 1.0))


@dataclass
class Spectrogram:
    """Complex STFT frames, bins-by-frames."""

    frames: np.ndarray  # (nfft//2 + 1, n_frames) complex
    nfft: int
    hop: int
    win_length: int
    sample_rate: int

    @property
    def n_bins(self) -> int:
        return self.frames.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)

    def power(self) -> np.ndarray:
        return np.abs(self.frames) ** 2


# ---------------------------------------------------------------------
# Chebyshev Type I design
# ---------------------------------------------------------------------


def cheby1_design(order: int, ripple_db: float, cutoff: float) -> FilterSpec:
    """Design a low-pass with equiripple passband of ``ripple_db``.

    Analog prototype poles sit on an ellipse determined by
    ``mu = asinh(1/eps)/n``; the bilinear transform with prewarped cutoff
    maps them into the unit circle, zeros land at z = -1, and the cascade
    gain is normalized so passband ripple peaks at 0 dB.
    """
    if not (1 <= order <= 16):
        raise ValueError(f"order must be in [1, 16], got {order}")
    if not (0.0 < ripple_db <= 10.0):
        raise ValueError(f"ripple must be in (0, 10] dB, got {ripple_db}")
    if not (0.0 < cutoff < 1.0):
        raise ValueError(f"cutoff must be normalized to (0, 1), got {cutoff}")

    n = order
    eps = np.sqrt(10.0 ** (ripple_db / 10.0) - 1.0)
    mu = np.arcsinh(1.0 / eps) / n
    ks = np.arange(1, n + 1)
    theta = (2 * ks - 1) * np.pi / (2 * n)
    proto = -np.sinh(mu) * np.sin(theta) + 1j * np.cosh(mu) * np.cos(theta)

    warp = np.tan(np.pi * cutoff / 2.0)
    analog = proto * warp
    zpoles = (1.0 + analog) / (1.0 - analog)

    # Pair conjugates into biquads; odd order leaves one real pole.
    upper = sorted(
        (p for p in zpoles if p.imag > 1e-12), key=lambda p: -abs(p)
    )
    real = [p.real for p in zpoles if abs(p.imag) <= 1e-12]
    sections = []
    for p in upper:
        # Two zeros at z = -1 against the conjugate pole pair.
        sections.append([1.0, 2.0, 1.0, 1.0, -2.0 * p.real, abs(p) ** 2])
    for p in real:
        sections.append([1.0, 1.0, 0.0, 1.0, -p, 0.0])
    sos = np.asarray(sections, dtype=np.float64)

    # DC gain target: 1 for odd order, -ripple dB for even order.
    target_dc = 1.0 if n % 2 else 10.0 ** (-ripple_db / 20.0)
    dc = 1.0
    for b0, b1, b2, a0, a1, a2 in sos:
        dc *= (b0 + b1 + b2) / (a0 + a1 + a2)
    gain = target_dc / dc
    sos[:, :3] *= np.sign(gain) * abs(gain) ** (1.0 / len(sos))

    return FilterSpec(order=order, ripple_db=float(ripple_db), cutoff=float(cutoff), sos=sos)


def chebyshev_magnitude(order: int, ripple_db: float, cutoff: float, freqs: np.ndarray) -> np.ndarray:
    """Analytic magnitude of the realized digital filter on normalized freqs.

    The bilinear transform maps digital frequency w to the analog prototype
    at tan(pi*w/2)/tan(pi*wc/2), where the response is
    1/sqrt(1 + eps^2 T_n^2(x)).
    """
    eps = np.sqrt(10.0 ** (ripple_db / 10.0) - 1.0)
    x = np.tan(np.pi * np.asarray(freqs) / 2.0) / np.tan(np.pi * cutoff / 2.0)
    tn = np.where(
        np.abs(x) <= 1.0,
        np.cos(order * np.arccos(np.clip(x, -1.0, 1.0))),
        np.cosh(order * np.arccosh(np.maximum(np.abs(x), 1.0))),
    )
    return 1.0 / np.sqrt(1.0 + (eps * tn) ** 2)


def frequency_response(spec: FilterSpec, n_points: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Magnitude of the cascade on a normalized frequency grid (0, 1)."""
    w = np.linspace(0, np.pi, n_points, endpoint=False)
    z = np.exp(1j * w)
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in spec.sos:
        h *= (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
    return w / np.pi, np.abs(h)


def sos_filter(x: np.ndarray, spec: FilterSpec, zero_phase: bool = False) -> np.ndarray:
    """Apply the cascade (direct-form II transposed); output length = input."""
    if not spec.stable:
        raise ValueError("refusing to run an unstable filter cascade")
    if zero_phase:
        return sosfiltfilt(spec.sos, x)
    return sosfilt(spec.sos, x)


def random_filter_spec(
    rng: np.random.Generator,
    order_range: tuple[int, int] = (4, 10),
    ripple_range_db: tuple[float, float] = (0.05, 5.0),
    cutoff: float = 0.5,
) -> FilterSpec:
    """Draw a randomized anti-aliasing filter: order uniform, ripple log-uniform."""
    order = int(rng.integers(order_range[0], order_range[1] + 1))
    lo, hi = np.log(ripple_range_db[0]), np.log(ripple_range_db[1])
    ripple = float(np.exp(rng.uniform(lo, hi)))
    return cheby1_design(order, ripple, cutoff)


DEFAULT_FILTER = cheby1_design(order=8, ripple_db=0.05, cutoff=0.5)


# ---------------------------------------------------------------------
# Rate conversion (16 kHz <-> 8 kHz)
# ---------------------------------------------------------------------

_SINC_TAPS = 127  # odd length: integer group delay of 63 samples
_SINC_BETA = 8.6


def _interp_kernel() -> np.ndarray:
    n = np.arange(_SINC_TAPS)
    m = (_SINC_TAPS - 1) // 2
    h = 0.5 * np.sinc(0.5 * (n - m)) * np.kaiser(_SINC_TAPS, _SINC_BETA)
    return h / h.sum()  # exact unit DC gain


_INTERP_H = _interp_kernel()


def downsample2(x: np.ndarray, spec: FilterSpec | None = None, zero_phase: bool = False) -> np.ndarray:
    """Anti-alias with ``spec`` (default 8th order, 0.05 dB) and keep every 2nd sample."""
    spec = spec if spec is not None else DEFAULT_FILTER
    x = np.asarray(x, dtype=np.float64)
    if x.size % 2:
        x = np.concatenate([x, [0.0]])
    return sos_filter(x, spec, zero_phase=zero_phase)[::2]


def upsample2(x: np.ndarray) -> np.ndarray:
    """Zero-stuff then interpolate with the Kaiser-windowed sinc, delay-free."""
    x = np.asarray(x, dtype=np.float64)
    stuffed = np.zeros(2 * x.size)
    stuffed[::2] = x
    m = (_SINC_TAPS - 1) // 2
    full = np.convolve(stuffed, 2.0 * _INTERP_H)
    return full[m : m + stuffed.size]


def downsample2_sinc(x: np.ndarray) -> np.ndarray:
    """Decimate with the windowed-sinc low-pass instead of a Chebyshev."""
    x = np.asarray(x, dtype=np.float64)
    if x.size % 2:
        x = np.concatenate([x, [0.0]])
    m = (_SINC_TAPS - 1) // 2
    filtered = np.convolve(x, _INTERP_H)[m : m + x.size]
    return filtered[::2]


# ---------------------------------------------------------------------
# STFT and mel projection
# ---------------------------------------------------------------------


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def _padded_window(nfft: int, win_length: int) -> np.ndarray:
    w = hann_window(win_length)
    if win_length == nfft:
        return w
    out = np.zeros(nfft)
    off = (nfft - win_length) // 2
    out[off : off + win_length] = w
    return out


def stft(
    x: np.ndarray,
    nfft: int = 2048,
    hop: int = 512,
    win_length: int | None = None,
    sample_rate: int = 16000,
    center: bool = True,
) -> Spectrogram:
    """Complex STFT with centered frames and reflect padding."""
    win_length = win_length if win_length is not None else nfft
    if win_length > nfft:
        raise ValueError(f"win_length {win_length} exceeds nfft {nfft}")
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return Spectrogram(
            frames=np.zeros((nfft // 2 + 1, 0), dtype=complex),
            nfft=nfft, hop=hop, win_length=win_length, sample_rate=sample_rate,
        )
    if center:
        x = np.pad(x, nfft // 2, mode="reflect")
    n_frames = max((x.size - nfft) // hop + 1, 0)
    window = _padded_window(nfft, win_length)
    idx = np.arange(nfft)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    spec = np.fft.rfft(frames, n=nfft, axis=1).T  # (bins, frames)
    return Spectrogram(frames=spec, nfft=nfft, hop=hop, win_length=win_length, sample_rate=sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, nfft: int, n_mels: int, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters, linear in Hz between mel-spaced corners, peak 1."""
    fmax = fmax if fmax is not None else sample_rate / 2.0
    corners = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins_hz = np.arange(nfft // 2 + 1) * sample_rate / nfft
    fb = np.zeros((n_mels, bins_hz.size))
    for i in range(n_mels):
        left, center, right = corners[i], corners[i + 1], corners[i + 2]
        rising = (bins_hz - left) / max(center - left, 1e-12)
        falling = (right - bins_hz) / max(right - center, 1e-12)
        fb[i] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return fb


def mel_project(spec: Spectrogram, n_mels: int) -> np.ndarray:
    """Mel magnitude frames, (n_mels, n_frames)."""
    fb = mel_filterbank(spec.sample_rate, spec.nfft, n_mels)
    return fb @ spec.magnitude()
