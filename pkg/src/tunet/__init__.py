"""Block-online speech bandwidth extension toolkit.

A numpy/scipy library covering the full chain: a small reverse-mode autodiff
core, the UNet-with-attention-bottleneck waveform model, Chebyshev filter
augmentation, masked-speech pretraining, spectral losses and metrics, and
real-time block streaming inference.
"""

from tunet.tensor import Tensor, Tape, backward, grad_check
from tunet.model import TUNet, TUNetConfig, PerformerConfig, build_model, count_parameters
from tunet.losses import MRConfig, mr_stft_mel_loss, mse_loss, total_loss
from tunet.metrics import MetricReport, lsd, si_sdr
from tunet.streaming import StreamSession, stream_apply, stream_process
from tunet.checkpoint import load_checkpoint, save_checkpoint
from tunet.training import evaluate, pretrain_msm, train_bwe

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "grad_check",
    "TUNet",
    "TUNetConfig",
    "PerformerConfig",
    "build_model",
    "count_parameters",
    "MRConfig",
    "mr_stft_mel_loss",
    "mse_loss",
    "total_loss",
    "MetricReport",
    "lsd",
    "si_sdr",
    "StreamSession",
    "stream_apply",
    "stream_process",
    "load_checkpoint",
    "save_checkpoint",
    "evaluate",
    "pretrain_msm",
    "train_bwe",
    "__version__",
]
