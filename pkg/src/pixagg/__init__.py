"""Denoising by learned pixel aggregation over deformable sampling grids."""
from .aggregation import (
    GroupPartition,
    RigidGrid,
    aggregate,
    aggregate_group,
    aggregate_spatial,
    aggregate_spatiotemporal,
    aggregation_backward,
    build_rigid_grid,
    contiguous_partition,
)
from .errors import (
    ConfigError,
    FormatError,
    InvalidGridError,
    InvalidInputError,
    InvalidParamsError,
    InvalidPartitionError,
    InvalidShapeError,
    PixaggError,
    TruncatedFileError,
)
from .loss import AnnealSchedule, anneal_coeff, l1_gamma_loss, video_loss
from .metrics import psnr, ssim
from .model import ModelConfig, PixelAggregationNet, load_checkpoint, save_checkpoint
from .noise import NoiseParams, add_noise, estimate_noise_level, gamma_correct, inverse_gamma
from .sampling import bilinear_sample, trilinear_backward, trilinear_sample
from .tensor import load_pxt, save_pxt
from .train import TrainConfig, train

__version__ = "0.1.0"
