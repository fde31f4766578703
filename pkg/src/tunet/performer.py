"""Linear-complexity attention bottleneck.

One head approximates softmax attention globally with positive orthogonal
random features (cost O(N*m*d)); the other attends exactly within a local
window. Blocks are pre-norm residual transformer layers. An exact softmax
attention implementation doubles as the verification oracle for the random
feature estimator.

No positional encoding is used: the bottleneck features arrive from wide
strided convolutions that already carry positional structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tunet import tensor as tt
from tunet.tensor import Tensor
from tunet.layers import Linear, leaky_relu

__all__ = [
    "PerformerConfig",
    "RandomFeatureMap",
    "favor_attention",
    "exact_attention",
    "local_attention",
    "PerformerBlock",
    "PerformerStack",
]

NORMALIZER_FLOOR = 1e-9


@dataclass
class PerformerConfig:
    """Bottleneck transformer hyperparameters."""

    layers: int = 3
    heads: int = 2
    head_dim: int = 32
    model_dim: int = 256
    ff_mult: int = 4
    random_features: int = 128
    local_window: int = 16
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.heads * self.head_dim > self.model_dim:
            raise ValueError(
                f"heads*head_dim = {self.heads * self.head_dim} exceeds model_dim {self.model_dim}"
            )
        if self.local_window < 1:
            raise ValueError("local_window must be >= 1")


@dataclass
class RandomFeatureMap:
    """Orthogonal Gaussian projection rows for the positive feature map."""

    matrix: np.ndarray  # (m, head_dim)
    seed: int

    @classmethod
    def draw(cls, m: int, head_dim: int, seed: int, dtype=np.float32) -> "RandomFeatureMap":
        rng = np.random.default_rng(seed)
        blocks = []
        remaining = m
        while remaining > 0:
            g = rng.normal(size=(head_dim, head_dim))
            q, r = np.linalg.qr(g)
            q = q * np.sign(np.diag(r))  # canonical orientation
            blocks.append(q.T[: min(remaining, head_dim)])
            remaining -= head_dim
        w = np.concatenate(blocks, axis=0)
        # Rescale rows to chi(head_dim) norms so the map matches plain
        # Gaussian features in distribution.
        norms = np.linalg.norm(rng.normal(size=(m, head_dim)), axis=1)
        w = w * norms[:, None]
        return cls(matrix=w.astype(dtype), seed=seed)


def positive_features(x: Tensor, feature_matrix: np.ndarray, shift: np.ndarray | float) -> Tensor:
    """phi(x) = exp(W x_hat - |x_hat|^2/2 - shift) / sqrt(m), x_hat = x / d^(1/4).

    ``shift`` is a detached stabilizer; any per-row (query) or global (key)
    constant cancels exactly in the attention ratio.
    """
    m, d = feature_matrix.shape
    scale = float(d) ** -0.25
    xh = x * scale
    proj = tt.matmul(xh, Tensor(feature_matrix.T.astype(x.dtype)))  # (N, m)
    sq = (xh * xh).sum(axis=1, keepdims=True) * 0.5
    logits = proj - sq - Tensor(np.asarray(shift, dtype=x.dtype))
    return tt.exp(logits) * (1.0 / np.sqrt(m))


def favor_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    features: RandomFeatureMap,
    diagnostics: dict | None = None,
) -> Tensor:
    """Random-feature softmax attention for one head, O(N*m*d).

    ``q, k, v`` are ``(N, d)``. The normalizer is floored at 1e-9 by an
    additive epsilon; occurrences are counted in ``diagnostics`` under
    ``"normalizer_clamps"``.
    """
    n, d = q.shape
    w = features.matrix
    scale = float(d) ** -0.25
    # Detached stabilizers: per-query row max, global key max.
    q_logits = (q.data * scale) @ w.T.astype(q.dtype) - 0.5 * np.sum(
        (q.data * scale) ** 2, axis=1, keepdims=True
    )
    k_logits = (k.data * scale) @ w.T.astype(k.dtype) - 0.5 * np.sum(
        (k.data * scale) ** 2, axis=1, keepdims=True
    )
    q_shift = q_logits.max(axis=1, keepdims=True)
    k_shift = k_logits.max()

    phi_q = positive_features(q, w, q_shift)  # (N, m)
    phi_k = positive_features(k, w, k_shift)  # (N, m)

    kv = tt.matmul(tt.transpose(phi_k), v)  # (m, d)
    num = tt.matmul(phi_q, kv)  # (N, d)
    den = tt.matmul(phi_q, tt.reshape(phi_k.sum(axis=0), (-1, 1)))  # (N, 1)

    low = den.data < NORMALIZER_FLOOR
    if low.any():
        if diagnostics is not None:
            diagnostics["normalizer_clamps"] = diagnostics.get("normalizer_clamps", 0) + int(
                low.sum()
            )
        den = den + Tensor((NORMALIZER_FLOOR * low).astype(den.dtype))
    return num / den


def exact_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) v with row-max subtraction for stability."""
    n, d = q.shape
    scores = tt.matmul(q, tt.transpose(k)) * (1.0 / np.sqrt(d))
    shift = scores.data.max(axis=1, keepdims=True)  # detached; softmax is shift-invariant
    e = tt.exp(scores - Tensor(shift.astype(scores.dtype)))
    return tt.matmul(e / e.sum(axis=1, keepdims=True), v)


def local_attention(q: Tensor, k: Tensor, v: Tensor, window: int) -> Tensor:
    """Exact attention restricted to keys within ``window - 1`` of each query.

    ``window`` = 1 reduces each output to its own value row; ``window`` >= N
    recovers full exact attention.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    n, d = q.shape
    reach = window - 1
    kp = tt.pad(k, ((reach, reach), (0, 0)))
    vp = tt.pad(v, ((reach, reach), (0, 0)))
    band = 2 * reach + 1

    cols = []
    for j in range(band):
        cols.append((q * kp[j : j + n]).sum(axis=1, keepdims=True))
    scores = tt.concat(cols, axis=1) * (1.0 / np.sqrt(d))  # (N, band)

    # Mask band positions that fall outside [0, N): position j of row i is
    # key index i + j - reach.
    rows = np.arange(n)[:, None]
    keys = rows + np.arange(band)[None, :] - reach
    invalid = (keys < 0) | (keys >= n)
    masked = scores + Tensor((-1e30 * invalid).astype(scores.dtype))

    shift = masked.data.max(axis=1, keepdims=True)
    e = tt.exp(masked - Tensor(shift.astype(scores.dtype)))
    weights = e / e.sum(axis=1, keepdims=True)  # (N, band)

    out = None
    for j in range(band):
        term = weights[:, j : j + 1] * vp[j : j + n]
        out = term if out is None else out + term
    return out


class MultiHeadAttention:
    """Two-head mix: head 0 global FAVOR+, head 1 local exact attention."""

    def __init__(self, cfg: PerformerConfig, rng: np.random.Generator, layer_index: int, dtype):
        inner = cfg.heads * cfg.head_dim
        self.cfg = cfg
        self.q_proj = Linear(cfg.model_dim, inner, rng=rng, dtype=dtype)
        self.k_proj = Linear(cfg.model_dim, inner, rng=rng, dtype=dtype)
        self.v_proj = Linear(cfg.model_dim, inner, rng=rng, dtype=dtype)
        self.out_proj = Linear(inner, cfg.model_dim, rng=rng, dtype=dtype)
        self.features = RandomFeatureMap.draw(
            cfg.random_features, cfg.head_dim, seed=1000 + layer_index, dtype=dtype
        )
        self.diagnostics: dict = {}

    def redraw_features(self, seed: int, dtype=None) -> None:
        dt = dtype if dtype is not None else self.features.matrix.dtype
        self.features = RandomFeatureMap.draw(
            self.cfg.random_features, self.cfg.head_dim, seed=seed, dtype=dt
        )

    def __call__(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        hd = cfg.head_dim
        q = self.q_proj(x)
        k = self.k_proj(x)
        v = self.v_proj(x)
        outs = []
        for h in range(cfg.heads):
            qs, ks, vs = (t[:, h * hd : (h + 1) * hd] for t in (q, k, v))
            if h == 0:
                outs.append(favor_attention(qs, ks, vs, self.features, self.diagnostics))
            else:
                outs.append(local_attention(qs, ks, vs, cfg.local_window))
        return self.out_proj(tt.concat(outs, axis=1))

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for sub, prefix in (
            (self.q_proj, "q"),
            (self.k_proj, "k"),
            (self.v_proj, "v"),
            (self.out_proj, "out"),
        ):
            for name, p in sub.parameters().items():
                out[f"{prefix}.{name}"] = p
        return out


class LayerNorm:
    def __init__(self, dim: int, dtype, eps: float = 1e-5):
        self.gain = tt.parameter(np.ones(dim, dtype=dtype))
        self.bias = tt.parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=1, keepdims=True)
        return centered / tt.sqrt(var + self.eps) * self.gain + self.bias

    def parameters(self) -> dict[str, Tensor]:
        return {"gain": self.gain, "bias": self.bias}


class PerformerBlock:
    """Pre-norm residual block: x + attn(LN(x)); x + FFN(LN(x))."""

    def __init__(self, cfg: PerformerConfig, rng: np.random.Generator, layer_index: int, dtype):
        self.cfg = cfg
        self.ln1 = LayerNorm(cfg.model_dim, dtype)
        self.attn = MultiHeadAttention(cfg, rng, layer_index, dtype)
        self.ln2 = LayerNorm(cfg.model_dim, dtype)
        hidden = cfg.model_dim * cfg.ff_mult
        self.ff1 = Linear(cfg.model_dim, hidden, rng=rng, dtype=dtype)
        self.ff2 = Linear(hidden, cfg.model_dim, rng=rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.ff2(leaky_relu(self.ff1(self.ln2(x)), self.cfg.leaky_slope))

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for sub, prefix in (
            (self.ln1, "ln1"),
            (self.attn, "attn"),
            (self.ln2, "ln2"),
            (self.ff1, "ff1"),
            (self.ff2, "ff2"),
        ):
            for name, p in sub.parameters().items():
                out[f"{prefix}.{name}"] = p
        return out


class PerformerStack:
    def __init__(self, cfg: PerformerConfig, rng: np.random.Generator, dtype=tt.DEFAULT_DTYPE):
        self.cfg = cfg
        self.blocks = [PerformerBlock(cfg, rng, i, dtype) for i in range(cfg.layers)]

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x

    def redraw_features(self, seed: int, dtype=None) -> None:
        for i, block in enumerate(self.blocks):
            block.attn.redraw_features(seed * 7919 + i, dtype=dtype)

    def feature_buffers(self) -> dict[str, np.ndarray]:
        return {f"block{i}.features": b.attn.features.matrix for i, b in enumerate(self.blocks)}

    def load_feature_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        for i, b in enumerate(self.blocks):
            key = f"block{i}.features"
            if key in buffers:
                b.attn.features.matrix = buffers[key]

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, block in enumerate(self.blocks):
            for name, p in block.parameters().items():
                out[f"block{i}.{name}"] = p
        return out
