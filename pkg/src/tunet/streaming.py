"""Block-online streaming: sliding-window inference with overlap-add.

Every ``hop`` new samples the session runs the model over its sliding
window and overlap-adds the result through a triangular synthesis window.
With window length L and hop h where 2h divides L, the shifted triangles sum
to exactly L/(2h) everywhere in steady state, so after normalization the
synthesis windows partition unity and an identity model reconstructs its
input exactly. Emission lags input by one window: at 16 kHz with L=8192 and
h=1024 that is the 512 ms block-online latency, and each hop leaves 64 ms of
wall-clock budget for the model.
"""

from __future__ import annotations

import time
from typing import Callable, Iterable, Iterator

import numpy as np

__all__ = ["StreamSession", "stream_process", "stream_apply", "synthesis_window"]


def synthesis_window(window: int, hop: int, dtype=np.float64) -> np.ndarray:
    """Normalized triangle: shifted copies at ``hop`` spacing sum to 1."""
    if window % (2 * hop):
        raise ValueError(f"2*hop ({2 * hop}) must divide window length ({window})")
    n = np.arange(window)
    tri = (np.minimum(n, window - 1 - n) + 0.5) / (window / 2)
    return (tri * (2.0 * hop / window)).astype(dtype)


class StreamSession:
    """Stateful block-online processor for one audio stream.

    ``process_window`` maps one full window of samples to an equal-length
    array (typically ``model.infer``). Latencies of each window evaluation
    are collected in ``chunk_latencies_ms``; ``chunk_hook`` (if given)
    receives ``(window_copy, raw_output)`` per chunk before windowing.
    """

    def __init__(
        self,
        process_window: Callable[[np.ndarray], np.ndarray],
        window: int = 8192,
        hop: int = 1024,
        dtype=np.float32,
        chunk_hook: Callable[[np.ndarray, np.ndarray], None] | None = None,
    ):
        self.process_window = process_window
        self.window = window
        self.hop = hop
        self.dtype = np.dtype(dtype)
        self.chunk_hook = chunk_hook
        self.chunk_latencies_ms: list[float] = []

        self._synth = synthesis_window(window, hop, dtype=self.dtype)
        self._buf = np.zeros(window, dtype=self.dtype)  # zero pre-roll
        self._acc = np.zeros(window, dtype=self.dtype)
        self._pending = np.zeros(0, dtype=self.dtype)
        self._received = 0
        self._emitted = 0
        # Hops until emissions correspond to real input rather than pre-roll.
        self._preroll_hops = window // hop - 1

    def push(self, samples: np.ndarray) -> np.ndarray:
        """Feed samples; returns whatever output became ready (may be empty)."""
        samples = np.asarray(samples, dtype=self.dtype).ravel()
        self._received += samples.size
        self._pending = np.concatenate([self._pending, samples])
        chunks = []
        while self._pending.size >= self.hop:
            chunk = self._step(self._pending[: self.hop])
            self._pending = self._pending[self.hop :]
            if chunk is not None:
                chunks.append(chunk)
        return np.concatenate(chunks) if chunks else np.zeros(0, dtype=self.dtype)

    def flush(self) -> np.ndarray:
        """Zero-pad the tail until all real input has been emitted."""
        chunks = []
        zeros = np.zeros(self.hop, dtype=self.dtype)
        if self._pending.size:
            pad = np.zeros(self.hop - self._pending.size, dtype=self.dtype)
            chunk = self._step(np.concatenate([self._pending, pad]))
            self._pending = np.zeros(0, dtype=self.dtype)
            if chunk is not None:
                chunks.append(chunk)
        while self._emitted < self._received:
            chunk = self._step(zeros)
            if chunk is not None:
                chunks.append(chunk)
        out = np.concatenate(chunks) if chunks else np.zeros(0, dtype=self.dtype)
        overshoot = self._emitted - self._received
        if overshoot > 0:
            out = out[:-overshoot]
            self._emitted = self._received
        return out

    def _step(self, hop_samples: np.ndarray) -> np.ndarray | None:
        t0 = time.perf_counter()
        self._buf[: -self.hop] = self._buf[self.hop :]
        self._buf[-self.hop :] = hop_samples
        raw = np.asarray(self.process_window(self._buf), dtype=self.dtype)
        if raw.shape != (self.window,):
            raise ValueError(f"process_window returned shape {raw.shape}, expected ({self.window},)")
        if self.chunk_hook is not None:
            self.chunk_hook(self._buf.copy(), raw.copy())
        self._acc += raw * self._synth
        ready = self._acc[: self.hop].copy()
        self._acc[: -self.hop] = self._acc[self.hop :]
        self._acc[-self.hop :] = 0.0
        self.chunk_latencies_ms.append((time.perf_counter() - t0) * 1e3)
        if self._preroll_hops > 0:
            self._preroll_hops -= 1
            return None
        self._emitted += ready.size
        return ready


def stream_process(
    source: Iterable[np.ndarray],
    process_window: Callable[[np.ndarray], np.ndarray],
    window: int = 8192,
    hop: int = 1024,
    dtype=np.float32,
) -> Iterator[np.ndarray]:
    """Generator form: consume blocks of samples, yield processed blocks.

    The final partial chunk is zero-padded internally and the tail trimmed,
    so total output length equals total input length.
    """
    session = StreamSession(process_window, window=window, hop=hop, dtype=dtype)
    for block in source:
        out = session.push(block)
        if out.size:
            yield out
    tail = session.flush()
    if tail.size:
        yield tail


def stream_apply(
    process_window: Callable[[np.ndarray], np.ndarray],
    samples: np.ndarray,
    window: int = 8192,
    hop: int = 1024,
    dtype=np.float32,
) -> tuple[np.ndarray, list[float]]:
    """Run a whole signal through a fresh session; returns (output, latencies)."""
    session = StreamSession(process_window, window=window, hop=hop, dtype=dtype)
    head = session.push(samples)
    tail = session.flush()
    return np.concatenate([head, tail]), session.chunk_latencies_ms
