"""Convolutional generative coding: predict/correct image models.

A numpy library implementing a hierarchy of latent feature maps that
predicts images top-down through strided transposed convolutions, corrects
its states from prediction errors over a fixed stimulus window, and learns
with local correlation-based kernel updates under a unit-norm constraint.

Submodules resolve lazily so the CLI can pin thread-pool environment
variables before numpy loads; ``from convngc import conv2d`` etc. works as
usual.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # ops
    "ConvGeometry": "ops", "ShapeError": "ops", "conv2d": "ops",
    "conv2d_batch": "ops", "deconv2d": "ops", "deconv2d_batch": "ops",
    "dilate": "ops", "flatten": "ops", "identity": "ops",
    "leaky_relu": "ops", "unflatten": "ops", "corr_kernel_grad": "ops",
    # model
    "ConvNgcModel": "model", "InferenceState": "model", "LayerSpec": "model",
    "ModelConfig": "model", "ModelUpdates": "model", "ancestral_init": "model",
    "apply_updates": "model", "compute_updates": "model",
    "correct_states": "model", "count_parameters": "model",
    "default_config": "model", "predict_all": "model", "predict_layer": "model",
    "project_kernels": "model", "run_inference": "model",
    "total_discrepancy": "model",
    # optim
    "Adam": "optim", "NormSgd": "optim", "make_optimizer": "optim",
    # checkpoint
    "save_checkpoint": "checkpoint", "load_checkpoint": "checkpoint",
    "checkpoint_bytes": "checkpoint", "CheckpointError": "checkpoint",
    # data
    "ImageBatch": "data", "DataFormatError": "data", "load_idx_mnist": "data",
    "colorize_mnist": "data", "replicate_to_rgb": "data",
    "load_cifar10_bin": "data", "save_tensor_file": "data",
    "load_tensor_file": "data", "load_image_tensor": "data",
    "corrupt_gaussian": "data", "batch_iter": "data",
    "resize_bilinear": "data",
    # metrics
    "MetricsReport": "metrics", "TrialAggregate": "metrics", "mse": "metrics",
    "ssim": "metrics", "psnr": "metrics", "aggregate": "metrics",
    "compare_images": "metrics", "report_text": "metrics",
    "report_kv": "metrics", "parse_kv": "metrics",
    # trainer
    "TrainConfig": "trainer", "TrainResult": "trainer", "train": "trainer",
    "evaluate_reconstruction": "trainer", "evaluate_denoising": "trainer",
    "evaluate_ood": "trainer", "reconstruct": "trainer",
}


def __getattr__(name):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{module}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
