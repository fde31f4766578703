"""Evaluation metrics: banded log-spectral distance and SI-SDR, plus reports.

Analysis settings are fixed (nfft 2048, hop 512, Hann, power spectra in
log10) so numbers are comparable across runs of this codebase; they are not
claimed to be comparable with other implementations that chose different
analysis parameters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from tunet.dsp import stft

__all__ = ["lsd", "si_sdr", "MetricReport", "REPORT_COLUMNS"]

LSD_NFFT = 2048
LSD_HOP = 512
LSD_POWER_FLOOR = 1e-10
SI_SDR_CAP_DB = 100.0
REPORT_COLUMNS = ("file", "lsd", "lsd_hf", "lsd_lf", "si_sdr")


def _band_bins(band: str, sample_rate: int, nfft: int) -> slice:
    edge = int(round(4000.0 * nfft / sample_rate))
    if band == "full":
        return slice(None)
    if band == "lf":  # [0, 4] kHz inclusive
        return slice(0, edge + 1)
    if band == "hf":  # (4, 8] kHz
        return slice(edge + 1, nfft // 2 + 1)
    raise ValueError(f"unknown band {band!r}; expected full, hf or lf")


def lsd(y_hat: np.ndarray, y: np.ndarray, band: str = "full", sample_rate: int = 16000) -> float:
    """Log-spectral distance: RMS over band bins of log10 power, then frame mean."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.shape} vs {y.shape}")
    bins = _band_bins(band, sample_rate, LSD_NFFT)
    p_hat = stft(y_hat, nfft=LSD_NFFT, hop=LSD_HOP, sample_rate=sample_rate).power() + LSD_POWER_FLOOR
    p_ref = stft(y, nfft=LSD_NFFT, hop=LSD_HOP, sample_rate=sample_rate).power() + LSD_POWER_FLOOR
    d = np.log10(p_ref[bins]) - np.log10(p_hat[bins])
    return float(np.mean(np.sqrt(np.mean(d * d, axis=0))))


def si_sdr(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Scale-invariant source-to-distortion ratio in dB, capped at 100."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.shape} vs {y.shape}")
    energy = float(y @ y)
    if energy == 0.0:
        raise ValueError("reference signal is identically zero")
    target = (float(y_hat @ y) / energy) * y
    num = float(target @ target)
    residual = y_hat - target
    den = float(residual @ residual)
    if den == 0.0:
        return SI_SDR_CAP_DB
    return float(min(10.0 * np.log10(num / den + 1e-12), SI_SDR_CAP_DB))


@dataclass
class MetricReport:
    """Per-utterance metric rows plus corpus means; serializes to CSV/JSON."""

    rows: list[dict] = field(default_factory=list)

    def add(self, file: str, y_hat: np.ndarray, y: np.ndarray, sample_rate: int = 16000) -> dict:
        row = {
            "file": file,
            "lsd": lsd(y_hat, y, "full", sample_rate),
            "lsd_hf": lsd(y_hat, y, "hf", sample_rate),
            "lsd_lf": lsd(y_hat, y, "lf", sample_rate),
            "si_sdr": si_sdr(y_hat, y),
        }
        self.rows.append(row)
        return row

    def means(self) -> dict:
        if not self.rows:
            return {k: float("nan") for k in REPORT_COLUMNS if k != "file"}
        return {
            k: float(np.mean([r[k] for r in self.rows]))
            for k in REPORT_COLUMNS
            if k != "file"
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)
            writer.writerow({"file": "mean", **self.means()})

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"rows": self.rows, "means": self.means()}, fh, indent=2)
        # trailing newline keeps the file friendly to line-based tools
        with open(path, "a") as fh:
            fh.write("\n")
