"""Binary model checkpoints.

Layout (all integers little-endian, see docs/formats.md for the full map):

    magic "NGC1" | version u4 | layer count u4
    per layer (bottom to top): channels, map_h, map_w, kernel, stride,
        phi id, g id  (all u4)
    flags u4 (bit0 tied error filters, bit1 bias maps enabled)
    hyperparameters: beta f8, gamma f8, n_steps u4, mu_z f8, sigma_z f8,
        leaky_slope f8, error_filter_rate f8, weight_sigma f8
    parameters: row-major float32 arrays in param_items() order
    optimizer id u4 (0 none, 1 norm_sgd, 2 adam) + optimizer payload

The byte stream is platform-independent; identical models and optimizer
states serialize to identical bytes. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .model import ACTIVATION_IDS, _ID_TO_ACTIVATION, ConvNgcModel, LayerSpec, ModelConfig
from .optim import Adam, NormSgd

MAGIC = b"NGC1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_model(model: ConvNgcModel) -> bytes:
    cfg = model.config
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg.layers))]
    for spec in cfg.layers:
        parts.append(struct.pack(
            "<7I", spec.channels, spec.map_h, spec.map_w, spec.kernel,
            spec.stride, ACTIVATION_IDS[spec.phi], ACTIVATION_IDS[spec.g]))
    flags = (1 if cfg.tied_errors else 0) | (2 if cfg.use_bias else 0)
    parts.append(struct.pack("<I", flags))
    parts.append(struct.pack("<ddIddddd", cfg.beta, cfg.gamma, cfg.n_steps,
                             cfg.mu_z, cfg.sigma_z, cfg.leaky_slope,
                             cfg.error_filter_rate, cfg.weight_sigma))
    for _, arr in model.param_items():
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def _pack_optimizer(optimizer) -> bytes:
    if optimizer is None:
        return struct.pack("<I", 0)
    if isinstance(optimizer, NormSgd):
        return struct.pack("<I", 1) + struct.pack("<ddQ", optimizer.alpha,
                                                  optimizer.eps, optimizer.t)
    if isinstance(optimizer, Adam):
        parts = [struct.pack("<I", 2),
                 struct.pack("<ddddQ", optimizer.alpha, optimizer.beta1,
                             optimizer.beta2, optimizer.eps, optimizer.t)]
        for arr in optimizer.state_arrays():
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        return b"".join(parts)
    raise CheckpointError(f"cannot serialize optimizer {type(optimizer)!r}")


def write_atomic(path: str, blob: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def save_checkpoint(path: str, model: ConvNgcModel, optimizer=None) -> None:
    write_atomic(path, _pack_model(model) + _pack_optimizer(optimizer))


def checkpoint_bytes(model: ConvNgcModel, optimizer=None) -> bytes:
    return _pack_model(model) + _pack_optimizer(optimizer)


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.off = 0
        self.path = path

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated at byte {self.off}")
        vals = struct.unpack_from(fmt, self.blob, self.off)
        self.off += size
        return vals

    def array(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        size = 4 * count
        if self.off + size > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated array at byte "
                                  f"{self.off}")
        arr = np.frombuffer(self.blob, dtype="<f4", count=count,
                            offset=self.off).reshape(shape).copy()
        self.off += size
        return arr


def load_checkpoint(path: str):
    """Read a checkpoint; returns ``(model, optimizer_or_None)``.

    The model is reconstructed in float32 (the storage precision).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    rd = _Reader(blob, path)
    rd.off = 4
    version, n_layers = rd.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    layers = []
    for _ in range(n_layers):
        ch, mh, mw, k, s, phi_id, g_id = rd.unpack("<7I")
        try:
            phi, g = _ID_TO_ACTIVATION[phi_id], _ID_TO_ACTIVATION[g_id]
        except KeyError as exc:
            raise CheckpointError(f"{path}: unknown activation id") from exc
        layers.append(LayerSpec(ch, mh, mw, k, s, phi, g))
    (flags,) = rd.unpack("<I")
    beta, gamma, n_steps, mu_z, sigma_z, slope, efr, wsig = rd.unpack("<ddIddddd")
    cfg = ModelConfig(layers=layers, beta=beta, gamma=gamma, n_steps=n_steps,
                      mu_z=mu_z, sigma_z=sigma_z, leaky_slope=slope,
                      error_filter_rate=efr, weight_sigma=wsig,
                      tied_errors=bool(flags & 1), use_bias=bool(flags & 2),
                      dtype="float32")
    model = ConvNgcModel(cfg)
    for _, arr in model.param_items():
        arr[...] = rd.array(arr.shape)

    (opt_id,) = rd.unpack("<I")
    optimizer = None
    if opt_id == 1:
        alpha, eps, step_count = rd.unpack("<ddQ")
        optimizer = NormSgd(alpha=alpha, eps=eps)
        optimizer.load_state([], step_count)
    elif opt_id == 2:
        alpha, b1, b2, eps, step_count = rd.unpack("<ddddQ")
        shapes = [arr.shape for _, arr in model.param_items()]
        optimizer = Adam(shapes, model.dtype, alpha=alpha, beta1=b1, beta2=b2,
                         eps=eps)
        arrays = [rd.array(s) for s in shapes] + [rd.array(s) for s in shapes]
        optimizer.load_state(arrays, step_count)
    elif opt_id != 0:
        raise CheckpointError(f"{path}: unknown optimizer id {opt_id}")
    if rd.off != len(blob):
        raise CheckpointError(
            f"{path}: {len(blob) - rd.off} trailing bytes after payload")
    return model, optimizer
