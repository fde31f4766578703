"""Dataset construction: degradation, segmentation, block masking.

Training pairs are built per file: the wideband signal is anti-aliased and
decimated to 8 kHz (one fixed Chebyshev in "single" mode, a fresh random
draw per file in "multi" mode), interpolated back onto the 16 kHz grid, and
both members are cut into 8192-sample windows at 50% overlap. The
narrowband member is by construction the down/up-sampled image of the
wideband member at every offset.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tunet.audio_io import AudioClip, load_wav
from tunet.dsp import (
    DEFAULT_FILTER,
    FilterSpec,
    downsample2,
    downsample2_sinc,
    random_filter_spec,
    upsample2,
)

__all__ = [
    "Segment",
    "SegmentPair",
    "segment_signal",
    "degrade_to_nb",
    "nb_on_wb_grid",
    "make_bwe_dataset",
    "make_msm_segments",
    "mask_blocks",
    "load_clips",
    "WINDOW",
    "HOP",
    "MASK_BLOCK",
    "MASK_RATE",
]

WINDOW = 8192
HOP = 4096
MASK_BLOCK = 256
MASK_RATE = 0.2


@dataclass
class Segment:
    samples: np.ndarray
    source: str
    offset: int
    padded: bool = False


@dataclass
class SegmentPair:
    nb_upsampled: np.ndarray  # model input, 16 kHz grid
    wb: np.ndarray            # target
    source: str
    offset: int
    padded: bool = False


def segment_signal(x: np.ndarray, source: str = "", window: int = WINDOW, hop: int = HOP) -> list[Segment]:
    """Fixed windows at 50% overlap; a too-short file yields one padded segment."""
    x = np.asarray(x)
    if x.size < window:
        padded = np.zeros(window, dtype=x.dtype)
        padded[: x.size] = x
        return [Segment(samples=padded, source=source, offset=0, padded=True)]
    segments = []
    for offset in range(0, x.size - window + 1, hop):
        segments.append(Segment(samples=x[offset : offset + window].copy(), source=source, offset=offset))
    return segments


def degrade_to_nb(wb: np.ndarray, method: str | FilterSpec = "single",
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Wideband 16 kHz -> narrowband 8 kHz by the chosen anti-aliasing route."""
    if isinstance(method, FilterSpec):
        return downsample2(wb, method)
    if method == "single":
        return downsample2(wb, DEFAULT_FILTER)
    if method == "multi":
        if rng is None:
            raise ValueError("multi mode needs an rng for the per-file filter draw")
        return downsample2(wb, random_filter_spec(rng))
    if method == "sinc":
        return downsample2_sinc(wb)
    raise ValueError(f"unknown degradation {method!r}; expected single, multi or sinc")


def nb_on_wb_grid(nb: np.ndarray) -> np.ndarray:
    return upsample2(nb)


def make_bwe_dataset(
    clips: dict[str, np.ndarray],
    mode: str = "single",
    rng: np.random.Generator | None = None,
    filter_spec: FilterSpec | None = None,
) -> list[SegmentPair]:
    """Aligned (narrowband-upsampled, wideband) training pairs per file."""
    if mode not in ("single", "multi", "sinc"):
        raise ValueError(f"unknown augmentation mode {mode!r}")
    pairs: list[SegmentPair] = []
    for name in sorted(clips):
        wb = np.asarray(clips[name], dtype=np.float64)
        if wb.size % 2:
            wb = np.concatenate([wb, [0.0]])
        if mode == "single":
            nb = downsample2(wb, filter_spec if filter_spec is not None else DEFAULT_FILTER)
        elif mode == "multi":
            if rng is None:
                raise ValueError("multi mode needs an rng for the per-file filter draw")
            nb = downsample2(wb, random_filter_spec(rng))
        else:
            nb = downsample2_sinc(wb)
        nb_up = nb_on_wb_grid(nb)
        wb_segments = segment_signal(wb, source=name)
        nb_segments = segment_signal(nb_up, source=name)
        for ws, ns in zip(wb_segments, nb_segments):
            pairs.append(
                SegmentPair(
                    nb_upsampled=ns.samples.astype(np.float32),
                    wb=ws.samples.astype(np.float32),
                    source=name,
                    offset=ws.offset,
                    padded=ws.padded,
                )
            )
    return pairs


def make_msm_segments(clips: dict[str, np.ndarray]) -> list[Segment]:
    """Masked-reconstruction corpus: plain 16 kHz-grid segments."""
    segments: list[Segment] = []
    for name in sorted(clips):
        x = np.asarray(clips[name], dtype=np.float32)
        segments.extend(segment_signal(x, source=name))
    return segments


def mask_blocks(
    x: np.ndarray,
    block: int = MASK_BLOCK,
    rate: float = MASK_RATE,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Zero ``round(rate * n_blocks)`` blocks chosen without replacement.

    Returns the masked copy and a per-sample boolean mask (True = zeroed).
    """
    x = np.asarray(x)
    if x.size % block:
        raise ValueError(f"block size {block} does not divide signal length {x.size}")
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"mask rate must be in [0, 1], got {rate}")
    n_blocks = x.size // block
    count = int(round(rate * n_blocks))
    mask = np.zeros(x.size, dtype=bool)
    if count:
        if rng is None:
            raise ValueError("masking needs an rng when rate > 0")
        chosen = rng.choice(n_blocks, size=count, replace=False)
        for b in chosen:
            mask[b * block : (b + 1) * block] = True
    masked = x.copy()
    masked[mask] = 0.0
    return masked, mask


def load_clips(directory, sample_rate: int = 16000) -> dict[str, np.ndarray]:
    """All WAV files under ``directory`` (non-recursive), name -> samples."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.wav"))
    if not paths:
        raise ValueError(f"no .wav files found in {directory}")
    clips = {}
    for p in paths:
        clip = load_wav(p)
        if clip.sample_rate != sample_rate:
            raise ValueError(f"{p}: expected {sample_rate} Hz, found {clip.sample_rate} Hz")
        clips[p.name] = clip.samples
    return clips
