"""Parametric 1-D layers: strided conv, transposed conv, linear, LSTM, pooling.

Convolution is cross-correlation (no kernel flip). Layers are immutable
parameter holders after construction; applying them is re-entrant. The conv,
transposed-conv and LSTM kernels are fused tape primitives with hand-written
adjoints so the tape stays small and both directions run on BLAS; their
gradients are pinned by finite-difference checks and brute-force oracles in
the test suite.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from tunet import tensor as tt
from tunet.tensor import Tensor, record

__all__ = [
    "Conv1d",
    "TConv1d",
    "Linear",
    "LSTM",
    "conv1d",
    "tconv1d",
    "lstm_seq",
    "linear",
    "block_maxpool",
    "leaky_relu",
    "tanh",
]

leaky_relu = tt.leaky_relu
tanh = tt.tanh


def _uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def default_pad(kernel: int, stride: int) -> int:
    """Per-side padding that makes a stage an exact ``stride``-fold resampler."""
    pad2 = kernel - stride
    if pad2 < 0 or pad2 % 2:
        raise ValueError(
            f"kernel {kernel} and stride {stride} admit no symmetric padding: "
            f"(K - S) must be even and non-negative"
        )
    return pad2 // 2


# ---------------------------------------------------------------------
# Strided 1-D convolution
# ---------------------------------------------------------------------


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None, stride: int, pad: int) -> Tensor:
    """Cross-correlate ``x (Cin, T)`` with ``weight (Cout, Cin, K)``.

    Output length is ``(T + 2*pad - K)//stride + 1``.
    """
    cin, t = x.shape
    cout, cin_w, k = weight.shape
    if cin != cin_w:
        raise ValueError(f"conv1d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if t + 2 * pad < k:
        raise ValueError(
            f"conv1d input too short: T={t} with pad={pad} needs at least {k - 2 * pad} samples"
        )
    xp = np.pad(x.data, ((0, 0), (pad, pad)))
    tout = (t + 2 * pad - k) // stride + 1
    s0, s1 = xp.strides
    cols = as_strided(xp, shape=(cin, k, tout), strides=(s0, s1, s1 * stride))
    out_d = np.tensordot(weight.data, cols, axes=([1, 2], [0, 1]))
    if bias is not None:
        out_d += bias.data[:, None]
    out = Tensor(out_d)

    def backward_fn(g):
        gw = np.tensordot(g, cols, axes=([1], [2]))  # (Cout, Cin, K)
        gxp = np.zeros_like(xp)
        gcols = np.tensordot(weight.data, g, axes=([0], [0]))  # (Cin, K, Tout)
        for kk in range(k):
            gxp[:, kk : kk + stride * tout : stride] += gcols[:, kk, :]
        gx = gxp[:, pad : pad + t] if pad else gxp
        gb = None if bias is None else g.sum(axis=1)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return record(out, inputs, backward_fn)


def tconv1d(x: Tensor, weight: Tensor, bias: Tensor | None, stride: int, pad: int) -> Tensor:
    """Transposed convolution of ``x (Cin, T)`` with ``weight (Cout, Cin, K)``.

    Realizes the gradient of :func:`conv1d` with the channel roles swapped;
    output length is ``(T - 1)*stride - 2*pad + K``.
    """
    cin, t = x.shape
    cout, cin_w, k = weight.shape
    if cin != cin_w:
        raise ValueError(f"tconv1d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if pad < 0:
        raise ValueError(f"tconv1d padding must be non-negative, got {pad}")
    tfull = (t - 1) * stride + k
    tout = tfull - 2 * pad
    if tout < 1:
        raise ValueError(f"tconv1d output length {tout} < 1 for T={t}, K={k}, pad={pad}")
    y = np.tensordot(weight.data, x.data, axes=([1], [0]))  # (Cout, K, T)
    out_full = np.zeros((cout, tfull), dtype=x.data.dtype)
    for kk in range(k):
        out_full[:, kk : kk + stride * t : stride] += y[:, kk, :]
    out_d = out_full[:, pad : pad + tout] if pad else out_full
    if bias is not None:
        out_d = out_d + bias.data[:, None]
    out = Tensor(out_d)

    def backward_fn(g):
        g_full = np.zeros((cout, tfull), dtype=g.dtype)
        g_full[:, pad : pad + tout] = g
        s0, s1 = g_full.strides
        gy = as_strided(g_full, shape=(cout, k, t), strides=(s0, s1, s1 * stride))
        gx = np.tensordot(weight.data, gy, axes=([0, 2], [0, 1]))  # (Cin, T)
        gw = np.tensordot(gy, x.data, axes=([2], [1])).transpose(0, 2, 1)  # (Cout, Cin, K)
        gb = None if bias is None else g.sum(axis=1)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return record(out, inputs, backward_fn)


class Conv1d:
    """Strided 1-D convolution layer with fan-in uniform initialization."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        pad: int | None = None,
        bias: bool = True,
        rng: np.random.Generator | None = None,
        dtype=tt.DEFAULT_DTYPE,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = default_pad(kernel, stride) if pad is None else pad
        if self.pad < 0:
            raise ValueError(f"Conv1d pad must be non-negative, got {self.pad}")
        fan_in = in_channels * kernel
        self.weight = tt.parameter(
            _uniform_init(rng, (out_channels, in_channels, kernel), fan_in, dtype)
        )
        self.bias = tt.parameter(_uniform_init(rng, (out_channels,), fan_in, dtype)) if bias else None

    def out_length(self, t: int) -> int:
        return (t + 2 * self.pad - self.kernel) // self.stride + 1

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, self.stride, self.pad)

    def parameters(self) -> dict[str, Tensor]:
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p


class TConv1d:
    """Transposed 1-D convolution layer mirroring :class:`Conv1d`."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        pad: int | None = None,
        bias: bool = True,
        rng: np.random.Generator | None = None,
        dtype=tt.DEFAULT_DTYPE,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = default_pad(kernel, stride) if pad is None else pad
        if self.pad < 0:
            raise ValueError(f"TConv1d pad must be non-negative, got {self.pad}")
        fan_in = in_channels * kernel
        self.weight = tt.parameter(
            _uniform_init(rng, (out_channels, in_channels, kernel), fan_in, dtype)
        )
        self.bias = tt.parameter(_uniform_init(rng, (out_channels,), fan_in, dtype)) if bias else None

    def out_length(self, t: int) -> int:
        return (t - 1) * self.stride - 2 * self.pad + self.kernel

    def __call__(self, x: Tensor) -> Tensor:
        return tconv1d(x, self.weight, self.bias, self.stride, self.pad)

    def parameters(self) -> dict[str, Tensor]:
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p


# ---------------------------------------------------------------------
# Linear
# ---------------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    out = tt.matmul(x, tt.transpose(weight))
    if bias is not None:
        out = tt.add(out, bias)
    return out


class Linear:
    def __init__(
        self,
        in_features: int,
        out_features: int,
        bias: bool = True,
        rng: np.random.Generator | None = None,
        dtype=tt.DEFAULT_DTYPE,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = tt.parameter(_uniform_init(rng, (out_features, in_features), in_features, dtype))
        self.bias = tt.parameter(_uniform_init(rng, (out_features,), in_features, dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)

    def parameters(self) -> dict[str, Tensor]:
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p


# ---------------------------------------------------------------------
# Unidirectional LSTM over a sequence
# ---------------------------------------------------------------------


def lstm_seq(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Run an LSTM over ``x (N, D)`` from a zero state; returns ``h (N, H)``.

    ``weight (4H, D + H)`` stacks the input/forget/cell/output gates in that
    order, acting on ``[x_t, h_{t-1}]``; ``bias (4H,)``.
    """
    n, d = x.shape
    h4, dh = weight.shape
    if h4 % 4 or dh != d + h4 // 4:
        raise ValueError(f"lstm weight shape {weight.shape} inconsistent with input dim {d}")
    h = h4 // 4
    wd, bd = weight.data, bias.data
    wx, wh = wd[:, :d], wd[:, d:]

    zx = x.data @ wx.T + bd  # (N, 4H), input contributions for every step
    hs = np.zeros((n + 1, h), dtype=x.data.dtype)
    cs = np.zeros((n + 1, h), dtype=x.data.dtype)
    gates = np.zeros((n, 4, h), dtype=x.data.dtype)
    hcs = np.zeros((n, h), dtype=x.data.dtype)
    for step in range(n):
        z = zx[step] + hs[step] @ wh.T
        i = _sig(z[:h])
        f = _sig(z[h : 2 * h])
        g = np.tanh(z[2 * h : 3 * h])
        o = _sig(z[3 * h :])
        c = f * cs[step] + i * g
        hc = np.tanh(c)
        gates[step, 0], gates[step, 1], gates[step, 2], gates[step, 3] = i, f, g, o
        cs[step + 1] = c
        hcs[step] = hc
        hs[step + 1] = o * hc
    out = Tensor(hs[1:].copy())

    def backward_fn(gout):
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(wd)
        gb = np.zeros_like(bd)
        gh_carry = np.zeros(h, dtype=gout.dtype)
        gc_carry = np.zeros(h, dtype=gout.dtype)
        for step in range(n - 1, -1, -1):
            i, f, g, o = gates[step]
            hc = hcs[step]
            gh = gout[step] + gh_carry
            go = gh * hc
            gc = gh * o * (1.0 - hc * hc) + gc_carry
            gi = gc * g
            gf = gc * cs[step]
            gg = gc * i
            gc_carry = gc * f
            gz = np.concatenate(
                [
                    gi * i * (1.0 - i),
                    gf * f * (1.0 - f),
                    gg * (1.0 - g * g),
                    go * o * (1.0 - o),
                ]
            )
            xh = np.concatenate([x.data[step], hs[step]])
            gw += np.outer(gz, xh)
            gb += gz
            gxh = wd.T @ gz
            gx[step] = gxh[:d]
            gh_carry = gxh[d:]
        return gx, gw, gb

    return record(out, (x, weight, bias), backward_fn)


def _sig(z: np.ndarray) -> np.ndarray:
    # Branch-free and overflow-safe: exp argument is always <= 0.
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class LSTM:
    """Unidirectional LSTM with standard sigmoid/tanh gating, zero initial state."""

    def __init__(
        self,
        input_dim: int,
        hidden_dim: int,
        rng: np.random.Generator | None = None,
        dtype=tt.DEFAULT_DTYPE,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        fan_in = input_dim + hidden_dim
        self.weight = tt.parameter(_uniform_init(rng, (4 * hidden_dim, fan_in), fan_in, dtype))
        self.bias = tt.parameter(_uniform_init(rng, (4 * hidden_dim,), fan_in, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return lstm_seq(x, self.weight, self.bias)

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


# ---------------------------------------------------------------------
# Block maxpooling
# ---------------------------------------------------------------------


def block_maxpool(x: Tensor, blocks: int) -> Tensor:
    """Max over each of ``blocks`` contiguous windows: ``(C, T) -> (C, B)``."""
    c, t = x.shape
    if t % blocks:
        raise ValueError(f"block count {blocks} does not divide sequence length {t}")
    xb = tt.reshape(x, (c, blocks, t // blocks))
    return tt.reduce_max(xb, axis=2)
