"""Command-line interface.

Subcommands: ``degrade`` (wideband corpus -> narrowband files), ``pretrain``
(masked-speech pretraining), ``train`` (bandwidth extension), ``infer``
(enhance one file, offline or block-streaming) and ``eval`` (metric report
over a degraded test set).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from tunet.audio_io import AudioClip, load_wav, save_wav
from tunet.checkpoint import save_checkpoint
from tunet.config import RunConfig, apply_overrides, load_config_file
from tunet.data import degrade_to_nb, load_clips, nb_on_wb_grid
from tunet.model import TUNetConfig
from tunet.streaming import stream_apply
from tunet.training import evaluate, load_model_for_inference, pretrain_msm, train_bwe

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tunet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="downsample a wideband corpus to narrowband files")
    p.add_argument("--in", dest="in_dir", required=True, help="directory of 16 kHz WAV files")
    p.add_argument("--out", dest="out_dir", required=True, help="output directory for 8 kHz WAV files")
    p.add_argument("--mode", choices=["single", "multi", "sinc"], default="single")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("pretrain", help="masked-speech pretraining on low-rate data")
    p.add_argument("--data", required=True, help="directory of WAV files (8 or 16 kHz)")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", dest="out_dir", help="checkpoint directory")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="bandwidth-extension training")
    p.add_argument("--data", required=True, help="directory of 16 kHz WAV files")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--init", help="checkpoint to initialize parameters from")
    p.add_argument("--out", dest="out_dir", help="checkpoint directory")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("infer", help="enhance one narrowband file")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--in", dest="in_wav", required=True, help="input WAV (8 kHz, or 16 kHz already upsampled)")
    p.add_argument("--out", dest="out_wav", required=True, help="output WAV (16 kHz)")
    p.add_argument("--stream", action="store_true", help="block-online streaming inference")

    p = sub.add_parser("eval", help="evaluate a model over a degraded test set")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--test", required=True, help="directory of 16 kHz reference WAV files")
    p.add_argument("--degrade", choices=["single", "multi", "sinc"], default="single")
    p.add_argument("--report", required=True, help="report path ending in .csv or .json")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_run(args, task: str) -> tuple[RunConfig, TUNetConfig | None]:
    if getattr(args, "config", None):
        run, model_cfg = load_config_file(args.config)
    else:
        run, model_cfg = RunConfig(), None
    run = apply_overrides(
        run,
        task=task,
        data_dir=getattr(args, "data", None),
        out_dir=getattr(args, "out_dir", None),
        seed=getattr(args, "seed", None),
    )
    return run, model_cfg


def _cmd_degrade(args) -> int:
    clips = load_clips(args.in_dir, sample_rate=16000)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([args.seed, 999])
    for name in sorted(clips):
        nb = degrade_to_nb(clips[name], args.mode, rng=rng)
        save_wav(AudioClip(samples=nb.astype(np.float32), sample_rate=8000), out_dir / name)
    print(f"degraded {len(clips)} files -> {out_dir}")
    return 0


def _cmd_pretrain(args) -> int:
    run, model_cfg = _load_run(args, "pretrain")
    clips = _clips_any_rate(run.data_dir)
    result = pretrain_msm(clips, run, model_config=model_cfg)
    print(f"pretrained {result.state.step} steps; final loss {result.losses[-1]:.6f}")
    _save_final(run, result, "msm")
    return 0


def _cmd_train(args) -> int:
    run, model_cfg = _load_run(args, "train")
    clips = load_clips(run.data_dir, sample_rate=16000)
    result = train_bwe(clips, run, model_config=model_cfg, init_checkpoint=args.init)
    print(f"trained {result.state.step} steps; final loss {result.losses[-1]:.6f}")
    _save_final(run, result, "bwe")
    return 0


def _save_final(run: RunConfig, result, tag: str) -> None:
    if run.out_dir:
        out = Path(run.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{tag}_final.ckpt"
        save_checkpoint(
            path,
            result.state.model,
            moments=result.state.moments(),
            meta={
                "step": result.state.step,
                "epoch": result.state.epoch,
                "seed": result.state.seed,
                "task": tag,
            },
        )
        print(f"checkpoint written to {path}")


def _clips_any_rate(directory) -> dict[str, np.ndarray]:
    """Load 8 or 16 kHz clips; 8 kHz ones are interpolated onto the 16 kHz grid."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.wav"))
    if not paths:
        raise ValueError(f"no .wav files found in {directory}")
    clips = {}
    for p in paths:
        clip = load_wav(p)
        x = clip.samples
        if clip.sample_rate == 8000:
            x = nb_on_wb_grid(x).astype(np.float32)
        clips[p.name] = x
    return clips


def _cmd_infer(args) -> int:
    model = load_model_for_inference(args.model)
    clip = load_wav(args.in_wav)
    x = clip.samples
    if clip.sample_rate == 8000:
        x = nb_on_wb_grid(x).astype(np.float32)
    if args.stream:
        out, latencies = stream_apply(
            model.infer, x, window=model.config.input_length, hop=model.config.input_length // 8
        )
        print(
            f"streamed {len(latencies)} chunks; "
            f"median latency {np.median(latencies):.1f} ms, max {max(latencies):.1f} ms"
        )
    else:
        window = model.config.input_length
        pad = (-x.size) % window
        padded = np.concatenate([x, np.zeros(pad, dtype=x.dtype)])
        out = np.concatenate(
            [model.infer(padded[i : i + window]) for i in range(0, padded.size, window)]
        )[: x.size]
    save_wav(AudioClip(samples=out.astype(np.float32), sample_rate=16000), args.out_wav)
    print(f"wrote {args.out_wav}")
    return 0


def _cmd_eval(args) -> int:
    model = load_model_for_inference(args.model)
    clips = load_clips(args.test, sample_rate=16000)
    report_path = Path(args.report)
    csv_path = report_path if report_path.suffix == ".csv" else None
    json_path = report_path if report_path.suffix == ".json" else None
    if csv_path is None and json_path is None:
        raise ValueError(f"report path must end in .csv or .json, got {report_path.suffix!r}")
    report = evaluate(
        model, clips, degradation=args.degrade, seed=args.seed,
        csv_path=csv_path, json_path=json_path,
    )
    means = report.means()
    print(
        f"evaluated {len(report.rows)} files: "
        + " ".join(f"{k}={v:.3f}" for k, v in means.items())
    )
    print(f"report written to {report_path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "degrade": _cmd_degrade,
        "pretrain": _cmd_pretrain,
        "train": _cmd_train,
        "infer": _cmd_infer,
        "eval": _cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
