"""Training loops: masked-speech pretraining, bandwidth-extension training,
and the evaluation harness.

Every stochastic choice derives from (seed, epoch) or (seed, step), never
from a shared mutable generator, so a resumed run replays the uninterrupted
one bit for bit and two runs with equal inputs produce identical
checkpoints.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tunet import tensor as tt
from tunet.tensor import Tape, Tensor, backward
from tunet.checkpoint import load_checkpoint, save_checkpoint
from tunet.config import RunConfig
from tunet.data import (
    SegmentPair,
    Segment,
    degrade_to_nb,
    make_bwe_dataset,
    make_msm_segments,
    mask_blocks,
    nb_on_wb_grid,
)
from tunet.losses import MRConfig, mse_loss, total_loss
from tunet.metrics import MetricReport, lsd
from tunet.model import TUNet, TUNetConfig
from tunet.optim import TrainState, adam_step, init_state
from tunet.streaming import stream_apply

__all__ = [
    "TrainResult",
    "pretrain_msm",
    "train_bwe",
    "evaluate",
    "load_model_for_inference",
]


@dataclass
class TrainResult:
    state: TrainState
    losses: list[float] = field(default_factory=list)
    val_history: list[dict] = field(default_factory=list)


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, 777, epoch])


def _mask_rng(seed: int, step: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 333, step, index])


def _feature_seed(seed: int, step: int) -> int:
    return (seed + 1) * 1_000_003 + step


def _collect_grads(model: TUNet) -> dict[str, np.ndarray]:
    grads = {}
    for name, p in model.parameters().items():
        if p.grad is not None:
            grads[name] = p.grad
    return grads


def _save_epoch_checkpoint(run: RunConfig, state: TrainState, tag: str) -> None:
    if not run.out_dir:
        return
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        out / f"{tag}_epoch{state.epoch:04d}.ckpt",
        state.model,
        moments=state.moments(),
        meta={"step": state.step, "epoch": state.epoch, "seed": state.seed, "task": tag},
    )


def _resolve_steps(run: RunConfig, steps_per_epoch: int) -> int:
    budget = run.epochs * steps_per_epoch
    return min(budget, run.max_steps) if run.max_steps else budget


def pretrain_msm(
    clips: dict[str, np.ndarray],
    run: RunConfig,
    model_config: TUNetConfig | None = None,
    state: TrainState | None = None,
) -> TrainResult:
    """Masked-speech pretraining: reconstruct each segment from its masked copy.

    The objective is MSE between the model output and the original segment
    over all samples; ``run.masked_only`` restricts it to the zeroed blocks.
    """
    segments = make_msm_segments(clips)
    if not segments:
        raise ValueError("empty pretraining corpus")
    if state is None:
        model = TUNet(model_config or TUNetConfig(), seed=run.seed)
        state = init_state(model, seed=run.seed)
    return _run_training(
        state,
        run,
        segments,
        step_fn=_msm_step_loss,
        tag="msm",
    )


def train_bwe(
    clips: dict[str, np.ndarray] | list[SegmentPair],
    run: RunConfig,
    model_config: TUNetConfig | None = None,
    state: TrainState | None = None,
    init_checkpoint: str | os.PathLike | None = None,
    val_pairs: list[SegmentPair] | None = None,
) -> TrainResult:
    """Bandwidth-extension training on aligned narrowband/wideband pairs."""
    if isinstance(clips, dict):
        pairs = make_bwe_dataset(clips, mode=run.augmentation, rng=np.random.default_rng([run.seed, 111]))
    else:
        pairs = clips
    if not pairs:
        raise ValueError("empty training set")
    if state is None:
        if init_checkpoint is not None:
            ckpt = load_checkpoint(init_checkpoint)
            model = ckpt.build_model(dtype=np.float32)
            if model_config is not None and model.config != model_config:
                raise ValueError("checkpoint architecture differs from the requested config")
            model.seed = run.seed
        else:
            model = TUNet(model_config or TUNetConfig(), seed=run.seed)
        state = init_state(model, seed=run.seed)
    mr_cfg = MRConfig()
    return _run_training(
        state,
        run,
        pairs,
        step_fn=lambda item, model, run_, step, idx: total_loss(
            model.forward(Tensor(item.nb_upsampled.reshape(1, -1))),
            item.wb.reshape(1, -1),
            alpha=run_.alpha,
            cfg=mr_cfg,
        ),
        tag="bwe",
        val_pairs=val_pairs,
    )


def _msm_step_loss(item: Segment, model: TUNet, run: RunConfig, step: int, idx: int) -> Tensor:
    masked, mask = mask_blocks(
        item.samples, block=run.mask_block, rate=run.mask_rate, rng=_mask_rng(run.seed, step, idx)
    )
    out = model.forward(Tensor(masked.reshape(1, -1)))
    if run.masked_only and mask.any():
        diff = out - Tensor(item.samples.reshape(1, -1))
        sel = Tensor(mask.reshape(1, -1).astype(np.float32))
        return ((diff * diff) * sel).sum() / float(mask.sum())
    return mse_loss(out, item.samples.reshape(1, -1))


def _run_training(state, run, items, step_fn, tag, val_pairs=None) -> TrainResult:
    model = state.model
    batch = min(run.batch_size, len(items))
    steps_per_epoch = max(len(items) // batch, 1)
    total_steps = _resolve_steps(run, steps_per_epoch)
    result = TrainResult(state=state)

    while state.step < total_steps:
        order = _epoch_rng(state.seed, state.epoch).permutation(len(items))
        for b in range(steps_per_epoch):
            if state.step >= total_steps:
                break
            chosen = order[b * batch : (b + 1) * batch]
            model.redraw_features(_feature_seed(state.seed, state.step))
            model.zero_grad()
            with Tape():
                loss_sum = None
                for j, item_idx in enumerate(chosen):
                    loss = step_fn(items[item_idx], model, run, state.step, j)
                    loss_sum = loss if loss_sum is None else loss_sum + loss
                loss_mean = loss_sum * (1.0 / len(chosen))
                backward(loss_mean)
            adam_step(state, _collect_grads(model), lr=run.learning_rate)
            result.losses.append(loss_mean.item())
        state.epoch += 1
        if val_pairs:
            result.val_history.append(
                {"epoch": state.epoch, "step": state.step, **validate(model, val_pairs)}
            )
        if run.checkpoint_every and state.epoch % run.checkpoint_every == 0:
            _save_epoch_checkpoint(run, state, tag)
    return result


def validate(model: TUNet, pairs: list[SegmentPair]) -> dict:
    """Mean full-band and high-band LSD over validation pairs (plain forward)."""
    scores = {"lsd": [], "lsd_hf": []}
    for pair in pairs:
        out = model.infer(pair.nb_upsampled)
        scores["lsd"].append(lsd(out, pair.wb, "full"))
        scores["lsd_hf"].append(lsd(out, pair.wb, "hf"))
    return {k: float(np.mean(v)) for k, v in scores.items()}


def evaluate(
    model: TUNet,
    clips: dict[str, np.ndarray],
    degradation: str = "single",
    seed: int = 0,
    use_streaming: bool = True,
    csv_path=None,
    json_path=None,
) -> MetricReport:
    """Degrade each clip, enhance, and score against the wideband original."""
    report = MetricReport()
    rng = np.random.default_rng([seed, 999])
    for name in sorted(clips):
        wb = np.asarray(clips[name], dtype=np.float64)
        if wb.size % 2:
            wb = wb[:-1]
        nb = degrade_to_nb(wb, degradation, rng=rng)
        nb_up = nb_on_wb_grid(nb)
        if use_streaming:
            out, _ = stream_apply(
                model.infer, nb_up.astype(np.float32),
                window=model.config.input_length,
                hop=model.config.input_length // 8,
            )
        else:
            usable = (nb_up.size // model.config.input_length) * model.config.input_length
            out = np.concatenate(
                [
                    model.infer(nb_up[i : i + model.config.input_length].astype(np.float32))
                    for i in range(0, usable, model.config.input_length)
                ]
            )
            wb = wb[:usable]
            nb_up = nb_up[:usable]
        report.add(name, out, wb[: out.size])
    if csv_path:
        report.write_csv(csv_path)
    if json_path:
        report.write_json(json_path)
    return report


def load_model_for_inference(path) -> TUNet:
    return load_checkpoint(path).build_model(dtype=np.float32)
