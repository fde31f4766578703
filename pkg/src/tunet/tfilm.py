"""Temporal feature-wise linear modulation.

A feature map ``(C, T)`` is summarized into B blocks by maxpooling, an LSTM
walks the block sequence, and a linear head emits per-block affine
coefficients (gamma, beta) that modulate every sample of the corresponding
block. The head is initialized so the layer starts near identity (small
weights, gamma bias 1, beta bias 0), which keeps early training stable.
"""

from __future__ import annotations

import numpy as np

from tunet import tensor as tt
from tunet.tensor import Tensor
from tunet.layers import LSTM, Linear, block_maxpool

__all__ = ["TFiLM"]


class TFiLM:
    """Block-wise affine modulation driven by an LSTM over pooled features."""

    def __init__(
        self,
        channels: int,
        blocks: int,
        rng: np.random.Generator | None = None,
        dtype=tt.DEFAULT_DTYPE,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels = channels
        self.blocks = blocks
        self.lstm = LSTM(channels, channels, rng=rng, dtype=dtype)
        self.head = Linear(channels, 2 * channels, rng=rng, dtype=dtype)
        self.head.weight.data *= 0.01
        self.head.bias.data[:channels] = 1.0
        self.head.bias.data[channels:] = 0.0

    def __call__(self, x: Tensor) -> Tensor:
        c, t = x.shape
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        b = self.blocks
        if t % b:
            raise ValueError(f"block count {b} does not divide sequence length {t}")
        pooled = block_maxpool(x, b)  # (C, B)
        h = self.lstm(tt.transpose(pooled))  # (B, C)
        coeff = self.head(h)  # (B, 2C)
        gamma = tt.reshape(tt.transpose(coeff[:, :c]), (c, b, 1))
        beta = tt.reshape(tt.transpose(coeff[:, c:]), (c, b, 1))
        xb = tt.reshape(x, (c, b, t // b))
        return tt.reshape(xb * gamma + beta, (c, t))

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for sub, prefix in ((self.lstm, "lstm"), (self.head, "head")):
            for k, v in sub.parameters().items():
                out[f"{prefix}.{k}"] = v
        return out
