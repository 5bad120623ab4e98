"""
MEW-UNet Package

A numpy implementation of a U-shaped segmentation network whose blocks mix
features with learned frequency-domain weights along three axis pairs.

This package provides:
- Real-input 2D DFTs over any axis pair of a [C, H, W] tensor, with adjoints
- Convolution, normalization and feed-forward building blocks with backward passes
- The multi-axis external weights layer, its weight generator and block
- The U-shaped model, checkpoints, losses, optimizers and the training loop
- Segmentation metrics (IoU, DSC, accuracy, sensitivity, specificity, HD95)
- A synthetic frequency-texture segmentation dataset

Main modules:
- spectral: rdft2/irdft2 and frequency signal strength curves
- nn_ops: conv2d, depthwise-separable conv, GroupNorm, GELU, FFN, bilinear, IRB
- mew: external weights, MEW layer and MEW block
- model: MewUNet, build, save_checkpoint/load_checkpoint
- train: TrainConfig, train_epoch, fit
- metrics: confusion counts, rates, hd95, evaluate_predictions
- data: TextureSpec, generate_dataset, save_dataset/load_dataset, augment
"""

from .errors import (
    CheckpointError,
    ConfigError,
    ContainerError,
    DataError,
    MewError,
    NumericalError,
    ShapeError,
    TapeError,
)

from .tensor import (
    make_rng,
    named_arrays,
)

from .spectral import (
    AxisPair,
    SpectrumLayout,
    HW,
    CW,
    CH,
    rdft2,
    irdft2,
    signal_strength_curve,
    curve_intersections,
)

from .mew import (
    BranchMask,
    mew_forward,
    mewb_forward,
)

from .model import (
    ModelConfig,
    MewUNet,
    build,
    save_checkpoint,
    load_checkpoint,
)

from .train import (
    TrainConfig,
    train_epoch,
    fit,
    evaluate_model,
)

from .metrics import (
    MetricReport,
    evaluate_predictions,
    hd95,
)

from .data import (
    TextureSpec,
    generate_dataset,
    save_dataset,
    load_dataset,
    augment,
)

__version__ = "0.1.0"

__all__ = [
    # Errors
    "CheckpointError",
    "ConfigError",
    "ContainerError",
    "DataError",
    "MewError",
    "NumericalError",
    "ShapeError",
    "TapeError",
    # Tensors
    "make_rng",
    "named_arrays",
    # Spectral
    "AxisPair",
    "SpectrumLayout",
    "HW",
    "CW",
    "CH",
    "rdft2",
    "irdft2",
    "signal_strength_curve",
    "curve_intersections",
    # MEW
    "BranchMask",
    "mew_forward",
    "mewb_forward",
    # Model
    "ModelConfig",
    "MewUNet",
    "build",
    "save_checkpoint",
    "load_checkpoint",
    # Training
    "TrainConfig",
    "train_epoch",
    "fit",
    "evaluate_model",
    # Metrics
    "MetricReport",
    "evaluate_predictions",
    "hd95",
    # Data
    "TextureSpec",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "augment",
]
