"""lumidec: decoupled two-stage low-light image enhancement.

Stage 1 (Network-I) estimates a per-pixel, per-channel exponent map and
brightens through the power mapping; stage 2 (Network-II) restores
appearance fidelity under guidance from that map. Includes the training
engine, checkpointing, full-reference quality metrics, and a CLI.
"""

__version__ = "0.1.0"

from .autodiff import AdamState, Tape, Tensor, adam_step
from .curves import apply_curve, apply_uniform_gamma, extract_profile
from .data import PairedSample, load_png, sample_batch, save_png, scan_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    DecodeError,
    DimensionError,
    LumidecError,
    NumericError,
)
from .estimator import DecoupledEnhancer
from .inference import EnhanceResult, enhance_image
from .metrics import MetricReport, evaluate_dataset, mean_color_angle, ms_ssim, psnr, ssim
from .net1 import Net1Config, init_net1, loss_r1, loss_smooth, loss_total1, net1_forward
from .net2 import (
    Net2Config,
    count_params,
    init_net2,
    loss_color,
    loss_r2,
    loss_total2,
    net2_forward,
)
from .perceptual import FeatureExtractor, FeatureExtractorSpec, FeatureStage, extract, loss_vgg
from .checkpoint import load_checkpoint, read_checkpoint_meta, save_checkpoint
from .training import TrainConfig, TrainResult, run_ablation, train_stage1, train_stage2

__all__ = [
    "AdamState",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DataError",
    "DecodeError",
    "DecoupledEnhancer",
    "DimensionError",
    "EnhanceResult",
    "FeatureExtractor",
    "FeatureExtractorSpec",
    "FeatureStage",
    "LumidecError",
    "MetricReport",
    "Net1Config",
    "Net2Config",
    "NumericError",
    "PairedSample",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "apply_curve",
    "apply_uniform_gamma",
    "count_params",
    "enhance_image",
    "evaluate_dataset",
    "extract",
    "extract_profile",
    "init_net1",
    "init_net2",
    "load_checkpoint",
    "load_png",
    "loss_color",
    "loss_r1",
    "loss_r2",
    "loss_smooth",
    "loss_total1",
    "loss_total2",
    "loss_vgg",
    "mean_color_angle",
    "ms_ssim",
    "net1_forward",
    "net2_forward",
    "psnr",
    "read_checkpoint_meta",
    "run_ablation",
    "sample_batch",
    "save_checkpoint",
    "scan_dataset",
    "ssim",
    "train_stage1",
    "train_stage2",
]
