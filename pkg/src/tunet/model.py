"""Full waveform model: strided-conv encoder, attention bottleneck, decoder.

The encoder compresses an 8192-sample window by 64x through three stride-4
convolutions (lengths 8192 -> 2048 -> 512 -> 128); the decoder mirrors it
with transposed convolutions back to 8192. Block-modulation layers follow
the first two encoder convolutions and the first two decoder stages. Four
additive skips: input -> output, the two modulated encoder maps -> matching
decoder stages, and around the attention stack.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from tunet import tensor as tt
from tunet.tensor import Tensor
from tunet.layers import Conv1d, TConv1d, leaky_relu, tanh
from tunet.performer import PerformerConfig, PerformerStack
from tunet.tfilm import TFiLM

__all__ = ["TUNetConfig", "TUNet", "build_model", "count_parameters", "PerformerConfig"]

COMPRESSION = 64  # three stride-4 encoder stages


@dataclass
class TUNetConfig:
    """Architecture hyperparameters; defaults give the 8192-sample model."""

    input_length: int = 8192
    encoder: tuple[tuple[int, int], ...] = ((64, 66), (128, 18), (256, 8))
    decoder: tuple[tuple[int, int], ...] = ((128, 8), (64, 18), (1, 66))
    stride: int = 4
    tfilm_blocks: int = 64
    leaky_slope: float = 0.01
    performer: PerformerConfig = field(default_factory=PerformerConfig)
    # Where encoder->decoder skips join: added to the transposed-conv output
    # before the decoder modulation layer ("pre_tfilm") or after it.
    skip_junction: str = "pre_tfilm"
    skip_input: bool = True
    skip_bottleneck: bool = True

    def __post_init__(self):
        if self.input_length % COMPRESSION:
            raise ValueError(f"input_length must be divisible by {COMPRESSION}")
        if len(self.encoder) != 3 or len(self.decoder) != 3:
            raise ValueError("expected three encoder and three decoder stages")
        if self.decoder[-1][0] != 1:
            raise ValueError("final decoder stage must emit one channel")
        if self.performer.model_dim != self.encoder[-1][0]:
            raise ValueError(
                f"bottleneck width {self.encoder[-1][0]} must equal "
                f"performer model_dim {self.performer.model_dim}"
            )
        if self.skip_junction not in ("pre_tfilm", "post_tfilm"):
            raise ValueError(f"unknown skip_junction {self.skip_junction!r}")

    @property
    def bottleneck_length(self) -> int:
        return self.input_length // COMPRESSION

    def scaled(self, width_divisor: int) -> "TUNetConfig":
        """Shrink every channel dimension for desk-scale experiments."""
        enc = tuple((max(c // width_divisor, 1), k) for c, k in self.encoder)
        dec = tuple((max(c // width_divisor, 1), k) for c, k in self.decoder[:-1]) + (
            self.decoder[-1],
        )
        perf = replace(
            self.performer,
            model_dim=max(self.performer.model_dim // width_divisor, self.performer.heads),
            head_dim=max(self.performer.head_dim // width_divisor, 1),
            random_features=max(self.performer.random_features // width_divisor, 4),
        )
        return replace(self, encoder=enc, decoder=dec, performer=perf)

    def to_flat_dict(self) -> dict:
        d = {
            "input_length": self.input_length,
            "stride": self.stride,
            "tfilm_blocks": self.tfilm_blocks,
            "leaky_slope": self.leaky_slope,
            "skip_junction": self.skip_junction,
            "skip_input": self.skip_input,
            "skip_bottleneck": self.skip_bottleneck,
            "encoder": ";".join(f"{c}:{k}" for c, k in self.encoder),
            "decoder": ";".join(f"{c}:{k}" for c, k in self.decoder),
        }
        p = self.performer
        d.update(
            performer_layers=p.layers,
            performer_heads=p.heads,
            performer_head_dim=p.head_dim,
            performer_model_dim=p.model_dim,
            performer_ff_mult=p.ff_mult,
            performer_random_features=p.random_features,
            performer_local_window=p.local_window,
        )
        return d

    @classmethod
    def from_flat_dict(cls, d: dict) -> "TUNetConfig":
        def stages(s):
            return tuple(tuple(int(v) for v in part.split(":")) for part in s.split(";"))

        perf = PerformerConfig(
            layers=int(d["performer_layers"]),
            heads=int(d["performer_heads"]),
            head_dim=int(d["performer_head_dim"]),
            model_dim=int(d["performer_model_dim"]),
            ff_mult=int(d["performer_ff_mult"]),
            random_features=int(d["performer_random_features"]),
            local_window=int(d["performer_local_window"]),
            leaky_slope=float(d["leaky_slope"]),
        )
        return cls(
            input_length=int(d["input_length"]),
            encoder=stages(d["encoder"]),
            decoder=stages(d["decoder"]),
            stride=int(d["stride"]),
            tfilm_blocks=int(d["tfilm_blocks"]),
            leaky_slope=float(d["leaky_slope"]),
            performer=perf,
            skip_junction=str(d["skip_junction"]),
            skip_input=str(d["skip_input"]) in ("True", "true", "1"),
            skip_bottleneck=str(d["skip_bottleneck"]) in ("True", "true", "1"),
        )


class TUNet:
    """Built model: immutable parameter holders, re-entrant forward."""

    def __init__(self, config: TUNetConfig, seed: int = 0, dtype=tt.DEFAULT_DTYPE):
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        s = config.stride
        b = config.tfilm_blocks

        enc_channels = [1] + [c for c, _ in config.encoder]
        self.enc = []
        for i, (c, k) in enumerate(config.encoder):
            try:
                self.enc.append(Conv1d(enc_channels[i], c, k, stride=s, rng=rng, dtype=dtype))
            except ValueError as e:
                raise ValueError(f"encoder stage {i + 1}: {e}") from e
        self.tfilm_enc = [
            TFiLM(config.encoder[0][0], b, rng=rng, dtype=dtype),
            TFiLM(config.encoder[1][0], b, rng=rng, dtype=dtype),
        ]

        self.performer = PerformerStack(config.performer, rng, dtype=dtype)

        dec_channels = [config.encoder[-1][0]] + [c for c, _ in config.decoder]
        self.dec = []
        for i, (c, k) in enumerate(config.decoder):
            try:
                self.dec.append(TConv1d(dec_channels[i], c, k, stride=s, rng=rng, dtype=dtype))
            except ValueError as e:
                raise ValueError(f"decoder stage {i + 1}: {e}") from e
        self.tfilm_dec = [
            TFiLM(config.decoder[0][0], b, rng=rng, dtype=dtype),
            TFiLM(config.decoder[1][0], b, rng=rng, dtype=dtype),
        ]

        self._check_geometry()

    def _check_geometry(self):
        t = self.config.input_length
        lengths = [t]
        for layer in self.enc:
            t = layer.out_length(t)
            lengths.append(t)
        if t != self.config.bottleneck_length:
            raise ValueError(f"encoder length chain {lengths} misses bottleneck")
        for layer in self.dec:
            t = layer.out_length(t)
            lengths.append(t)
        if t != self.config.input_length:
            raise ValueError(f"decoder length chain {lengths} misses input length")

    # -- forward --------------------------------------------------------

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        if x.shape != (1, cfg.input_length):
            raise ValueError(
                f"forward expects shape (1, {cfg.input_length}), got {x.shape}; "
                "the streaming layer is responsible for framing"
            )
        slope = cfg.leaky_slope

        e1 = self.tfilm_enc[0](leaky_relu(self.enc[0](x), slope))
        e2 = self.tfilm_enc[1](leaky_relu(self.enc[1](e1), slope))
        z = leaky_relu(self.enc[2](e2), slope)

        y = tt.transpose(self.performer(tt.transpose(z)))
        if cfg.skip_bottleneck:
            y = y + z

        d1 = leaky_relu(self.dec[0](y), slope)
        if cfg.skip_junction == "pre_tfilm":
            d1 = self.tfilm_dec[0](d1 + e2)
        else:
            d1 = self.tfilm_dec[0](d1) + e2

        d2 = leaky_relu(self.dec[1](d1), slope)
        if cfg.skip_junction == "pre_tfilm":
            d2 = self.tfilm_dec[1](d2 + e1)
        else:
            d2 = self.tfilm_dec[1](d2) + e1

        out = tanh(self.dec[2](d2))
        if cfg.skip_input:
            out = out + x
        return out

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def infer(self, samples: np.ndarray) -> np.ndarray:
        """Tape-free forward over one window of raw samples."""
        x = Tensor(np.asarray(samples, dtype=self.dtype).reshape(1, -1))
        return self.forward(x).data[0]

    # -- parameters and buffers ------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}

        def absorb(prefix, layer):
            for name, p in layer.parameters().items():
                p.name = f"{prefix}.{name}"
                out[p.name] = p

        for i, layer in enumerate(self.enc):
            absorb(f"encoder.conv{i + 1}", layer)
        for i, layer in enumerate(self.tfilm_enc):
            absorb(f"encoder.tfilm{i + 1}", layer)
        absorb("performer", self.performer)
        for i, layer in enumerate(self.dec):
            absorb(f"decoder.conv{i + 1}", layer)
        for i, layer in enumerate(self.tfilm_dec):
            absorb(f"decoder.tfilm{i + 1}", layer)
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"performer.{k}": v for k, v in self.performer.feature_buffers().items()}

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        self.performer.load_feature_buffers(
            {k.removeprefix("performer."): v for k, v in buffers.items()}
        )

    def redraw_features(self, seed: int) -> None:
        self.performer.redraw_features(seed, dtype=self.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def astype(self, dtype) -> "TUNet":
        """Fresh model with parameters and buffers cast to ``dtype``."""
        other = TUNet(self.config, seed=self.seed, dtype=dtype)
        src, dst = self.parameters(), other.parameters()
        for name, p in dst.items():
            p.data = src[name].data.astype(dtype)
        other.load_buffers({k: v.astype(dtype) for k, v in self.buffers().items()})
        return other


def build_model(config: TUNetConfig | None = None, seed: int = 0, dtype=tt.DEFAULT_DTYPE) -> TUNet:
    return TUNet(config if config is not None else TUNetConfig(), seed=seed, dtype=dtype)


def count_parameters(model: TUNet) -> tuple[int, dict[str, int]]:
    """Total trainable scalar count plus a per-block breakdown."""
    breakdown: dict[str, int] = {}
    for name, p in model.parameters().items():
        block = ".".join(name.split(".")[:2])
        breakdown[block] = breakdown.get(block, 0) + p.size
    return sum(breakdown.values()), breakdown


def time_forward(model: TUNet, repeats: int = 5) -> float:
    """Median wall-clock seconds for one tape-free window forward."""
    x = np.zeros(model.config.input_length, dtype=model.dtype)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        model.infer(x)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))
