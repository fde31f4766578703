"""Bias-corrected Adam over a named parameter set, with resumable state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tunet.model import TUNet

__all__ = ["TrainState", "adam_step", "init_state"]


@dataclass
class TrainState:
    """Model plus optimizer moments and loop counters; checkpointable."""

    model: TUNet
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    epoch: int = 0
    seed: int = 0

    def moments(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {name: (self.m[name], self.v[name]) for name in self.m}


def init_state(model: TUNet, seed: int = 0) -> TrainState:
    state = TrainState(model=model, seed=seed)
    for name, p in model.parameters().items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(
    state: TrainState,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> TrainState:
    """One in-place update; missing gradients count as zero (moments decay)."""
    params = state.model.parameters()
    for name, g in grads.items():
        if name not in params:
            raise ValueError(f"gradient for unknown parameter {name!r}")
        if g is not None and g.shape != params[name].data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} of shape {params[name].data.shape}"
            )
        if g is not None and not np.all(np.isfinite(g)):
            raise RuntimeError(f"non-finite gradient for parameter {name!r}; step aborted")
    t = state.step + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= (lr * update).astype(p.data.dtype)
    state.step = t
    return state
