"""Spline and wavelet Kolmogorov-Arnold layers inside Vision Transformers, on plain numpy."""

from .bench import BenchReport, bench_layer_sweep, emit_report
from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .data import ImageDataset, load_dataset, synthetic_frequency
from .estimator import HybKanViTClassifier
from .spline import EffKanLayer, SplineGrid, bspline_basis, effkan_init
from .tensor import ConfigError, DimensionError, NonFiniteError
from .train import AdamW, OptimizerConfig, TrainingDiverged, cross_entropy_smoothed, evaluate, train
from .vit import (
    VARIANTS,
    ModelConfig,
    VisionTransformer,
    analytic_param_count,
    build_model,
    count_flops,
    count_params,
    make_config,
)
from .wavelet import WavKanLayer, fwt, iwt, prune_mask, wavkan_init

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "BenchReport",
    "ConfigError",
    "DimensionError",
    "EffKanLayer",
    "HybKanViTClassifier",
    "ImageDataset",
    "ModelConfig",
    "NonFiniteError",
    "OptimizerConfig",
    "SplineGrid",
    "TrainingDiverged",
    "VARIANTS",
    "VisionTransformer",
    "WavKanLayer",
    "analytic_param_count",
    "bench_layer_sweep",
    "bspline_basis",
    "build_model",
    "count_flops",
    "count_params",
    "cross_entropy_smoothed",
    "effkan_init",
    "emit_report",
    "evaluate",
    "fwt",
    "iwt",
    "load_checkpoint",
    "load_dataset",
    "make_config",
    "prune_mask",
    "restore_model",
    "save_checkpoint",
    "synthetic_frequency",
    "train",
    "wavkan_init",
]
