"""Training and evaluation orchestration.

Per mini-batch the trainer runs the full clamped inference window, computes
the local synaptic updates from the settled state, applies one optimizer
step and re-projects the kernels. Latent states never persist across
batches; every stimulus window starts from a fresh ancestral projection.

Randomness is structured for exact resumability: the weight init stream and
every epoch's shuffle/state-sampling streams are derived from (seed, role,
epoch), so resuming from an epoch-boundary checkpoint replays the identical
remaining schedule. Single-threaded runs are bit-reproducible.

Training log is append-only, one line per batch: ``epoch, batch, ToD,
wall_ms`` (wall_ms is wall-clock and thus the one non-reproducible field).
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import checkpoint as ckpt
from .data import ImageBatch, batch_iter, corrupt_gaussian, load_image_tensor
from .metrics import MetricsReport, compare_images, report_kv, report_text
from .model import (
    ConvNgcModel,
    apply_updates,
    compute_updates,
    count_parameters,
    default_config,
    run_inference,
)
from .optim import make_optimizer

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Everything one experiment needs; mirrors the flat config-file keys."""

    train_data: str = ""
    val_data: str = ""
    out_dir: str = "out"
    epochs: int = 10
    batch_size: int = 500
    optimizer: str = "adam"
    alpha: float = 0.001
    n_steps: int = 60
    eval_n_steps: int = 0          # 0: reuse n_steps
    beta: float = 0.1
    gamma: float = 0.001
    mu_z: float = 0.5
    sigma_z: float = 0.05
    leaky_slope: float = 0.3
    seed: int = 0
    checkpoint_every: int = 0      # epochs between snapshots; 0 = final only
    eval_every: int = 0            # epochs between validation passes
    val_split: int = 0             # carve this many samples off the train set
    channels: tuple = (10, 15, 20, 25, 3)
    tied_errors: bool = True
    use_bias: bool = False
    resume: str = ""

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.n_steps < 1:
            raise ValueError("stimulus window must be >= 1")
        for name in ("alpha", "beta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma < 0 or self.sigma_z < 0:
            raise ValueError("gamma and sigma_z must be non-negative")

    def model_config(self):
        return default_config(tuple(self.channels), beta=self.beta,
                              gamma=self.gamma, n_steps=self.n_steps,
                              mu_z=self.mu_z, sigma_z=self.sigma_z,
                              leaky_slope=self.leaky_slope,
                              tied_errors=self.tied_errors,
                              use_bias=self.use_bias)


def _stream(seed: int, role: int, epoch: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, role, epoch])


def _shuffle_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, 1, epoch]).generate_state(1)[0])


@dataclass
class TrainResult:
    model: ConvNgcModel
    checkpoint_path: str
    log_path: str
    val_reports: list = field(default_factory=list)


def train(config: TrainConfig, train_set: ImageBatch | None = None,
          val_set: ImageBatch | None = None) -> TrainResult:
    """Run the full training loop; returns the final model and file paths.

    Datasets may be passed directly or read from the tensor-container paths
    in ``config``. Everything lands under ``config.out_dir``.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    if train_set is None:
        if not config.train_data:
            raise ValueError("no training data: set train_data or pass a batch")
        train_set = load_image_tensor(config.train_data)
    if val_set is None and config.val_data:
        val_set = load_image_tensor(config.val_data)
    if val_set is None and config.val_split > 0:
        if config.val_split >= len(train_set):
            raise ValueError("val_split consumes the whole training set")
        order = np.random.default_rng([config.seed, 3]).permutation(len(train_set))
        val_set = train_set.take(order[:config.val_split])
        train_set = train_set.take(order[config.val_split:])

    batches_per_epoch = -(-len(train_set) // config.batch_size)
    start_epoch = 0
    if config.resume:
        model, optimizer = ckpt.load_checkpoint(config.resume)
        want = config.model_config()
        if [s.channels for s in model.config.layers] != \
                [s.channels for s in want.layers]:
            raise ValueError(
                f"checkpoint {config.resume} has channels "
                f"{[s.channels for s in model.config.layers]}, config wants "
                f"{[s.channels for s in want.layers]}")
        if optimizer is None:
            optimizer = make_optimizer(config.optimizer, model, config.alpha)
        start_epoch = optimizer.step_count // batches_per_epoch
    else:
        model = ConvNgcModel(config.model_config())
        model.init_params(_stream(config.seed, 0))
        optimizer = make_optimizer(config.optimizer, model, config.alpha)

    log_path = os.path.join(config.out_dir, "train.log")
    final_path = os.path.join(config.out_dir, "checkpoint.ngc")
    _write_config_echo(config, os.path.join(config.out_dir, "effective_config.kv"))
    log.info("training: %d samples, %d epochs, %d params",
             len(train_set), config.epochs, count_parameters(model))

    val_reports = []
    epoch_tods = []
    with open(log_path, "a") as logfh:
        for epoch in range(start_epoch, config.epochs):
            state_rng = _stream(config.seed, 2, epoch)
            tods = []
            for bi, batch in enumerate(batch_iter(
                    train_set, config.batch_size,
                    _shuffle_seed(config.seed, epoch))):
                t0 = time.monotonic()
                state = run_inference(model, batch.data, "clamped",
                                      config.n_steps, rng=state_rng)
                upd = compute_updates(model, state)
                apply_updates(model, upd, optimizer)
                tod = state.tod_trace[-1]
                tods.append(tod / len(batch))
                wall_ms = int(round((time.monotonic() - t0) * 1000))
                logfh.write(f"{epoch}, {bi}, {tod:.9g}, {wall_ms}\n")
            logfh.flush()
            epoch_tods.append(float(np.mean(tods)))
            if len(epoch_tods) >= 2 and epoch_tods[-1] > epoch_tods[-2]:
                log.warning("mean ToD rose between epochs %d and %d "
                            "(%.4f -> %.4f)", epoch - 1, epoch,
                            epoch_tods[-2], epoch_tods[-1])
            if config.checkpoint_every and \
                    (epoch + 1) % config.checkpoint_every == 0:
                ckpt.save_checkpoint(
                    os.path.join(config.out_dir, f"checkpoint_e{epoch + 1}.ngc"),
                    model, optimizer)
            if val_set is not None and config.eval_every and \
                    (epoch + 1) % config.eval_every == 0:
                report = evaluate_reconstruction(
                    model, val_set, n_steps=config.eval_n_steps or None,
                    tag=f"val_e{epoch + 1}")
                val_reports.append(report)
                _write_report(report, config.out_dir, f"val_e{epoch + 1}")
                s = report.summary()
                log.info("epoch %d val: mse %.3f ssim %.4f", epoch + 1,
                         s["mse_mean"], s["ssim_mean"])

    ckpt.save_checkpoint(final_path, model, optimizer)
    return TrainResult(model, final_path, log_path, val_reports)


def _write_config_echo(config: TrainConfig, path: str) -> None:
    lines = []
    for key, value in asdict(config).items():
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    ckpt.write_atomic(path, ("\n".join(lines) + "\n").encode())


def _write_report(report: MetricsReport, out_dir: str, stem: str) -> None:
    with open(os.path.join(out_dir, f"{stem}.txt"), "w") as fh:
        fh.write(report_text(report))
    with open(os.path.join(out_dir, f"{stem}.kv"), "w") as fh:
        fh.write(report_kv(report))


def _scale_255(images: np.ndarray) -> np.ndarray:
    return np.clip(images.astype(np.float64), 0.0, 1.0) * 255.0


def reconstruct(model: ConvNgcModel, images: np.ndarray, mode: str = "clamped",
                n_steps: int | None = None, seed: int = 1234,
                batch_size: int = 500) -> np.ndarray:
    """Model reconstructions for a stack of [0,1] images, still on [0,1]-ish
    scale (whatever the output prediction produced, unclipped)."""
    outputs = []
    for start in range(0, len(images), batch_size):
        chunk = images[start:start + batch_size]
        state = run_inference(model, chunk, mode, n_steps,
                              rng=np.random.default_rng([seed, start]))
        outputs.append(state.output_image())
    return np.concatenate(outputs)


def evaluate_reconstruction(model: ConvNgcModel, dataset: ImageBatch,
                            n_steps: int | None = None, seed: int = 1234,
                            tag: str = "recon",
                            batch_size: int = 500) -> MetricsReport:
    """Clamped-inference reconstruction quality against the dataset itself."""
    out = reconstruct(model, dataset.data, "clamped", n_steps, seed, batch_size)
    return compare_images(_scale_255(dataset.data), _scale_255(out), tag=tag)


def evaluate_denoising(model: ConvNgcModel, dataset: ImageBatch, sigma: float,
                       seed: int, n_steps: int | None = None,
                       tag: str = "denoise",
                       batch_size: int = 500) -> MetricsReport:
    """Corrupt, run init-only inference, score output against the *clean*
    originals."""
    noisy = corrupt_gaussian(dataset, sigma, seed)
    out = reconstruct(model, noisy.data, "init_only", n_steps, seed, batch_size)
    return compare_images(_scale_255(dataset.data), _scale_255(out), tag=tag)


def evaluate_ood(model: ConvNgcModel, foreign: ImageBatch, source: str,
                 target: str, n_steps: int | None = None, seed: int = 1234,
                 batch_size: int = 500) -> MetricsReport:
    """Reconstruction on a dataset disjoint from training, tagged source->target."""
    return evaluate_reconstruction(model, foreign, n_steps, seed,
                                   tag=f"{source}->{target}",
                                   batch_size=batch_size)
