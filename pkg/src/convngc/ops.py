"""Dense 2-D convolution machinery used throughout the model.

Three structured linear operators built on numpy arrays:

* ``conv2d``   -- strided cross-correlation with SAME padding,
* ``deconv2d`` -- its exact linear adjoint (transposed convolution),
* ``dilate``   -- zero insertion between elements.

The adjoint identity ``<deconv2d(x, K), y> == <x, conv2d(y, K)>`` holds for
the identical kernel, stride and padding; it is the contract every other
piece of the model leans on (feedback routing and kernel gradients are both
adjoint applications). Batched multi-channel variants are implemented as a
single GEMM per call via an im2col buffer, so large mini-batches stay fast
without any compiled extension.

All functions are pure; nothing here owns mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Raised when an operand shape is inconsistent with the requested op."""


def same_geometry(in_len: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """SAME-padding geometry along one axis.

    Returns ``(out_len, pad_low, pad_high)`` with ``out_len = ceil(in/stride)``
    and the asymmetric split ``pad_low = floor(total/2)``.
    """
    if in_len < 1 or kernel < 1 or stride < 1:
        raise ShapeError(
            f"invalid geometry: in={in_len} kernel={kernel} stride={stride}")
    out_len = -(-in_len // stride)
    total = max((out_len - 1) * stride + kernel - in_len, 0)
    lo = total // 2
    return out_len, lo, total - lo


@dataclass(frozen=True)
class ConvGeometry:
    """Resolved SAME-padding geometry for one (input, kernel, stride) triple."""

    kernel_h: int
    kernel_w: int
    stride: int
    in_h: int
    in_w: int
    out_h: int
    out_w: int
    pad_low_h: int
    pad_low_w: int
    pad_high_h: int
    pad_high_w: int

    @classmethod
    def same(cls, in_h, in_w, kernel_h, kernel_w, stride):
        oh, lo_h, hi_h = same_geometry(in_h, kernel_h, stride)
        ow, lo_w, hi_w = same_geometry(in_w, kernel_w, stride)
        return cls(kernel_h, kernel_w, stride, in_h, in_w, oh, ow,
                   lo_h, lo_w, hi_h, hi_w)


def conv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1) -> np.ndarray:
    """Strided SAME-padded cross-correlation of a single 2-D map.

    ``out[o] = sum_k x[o*stride + k - pad_low] * kernel[k]`` with zeros
    outside bounds. Output extents are ``ceil(in/stride)``.
    """
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    if x.ndim != 2:
        raise ShapeError(f"conv2d input must be 2-D, got shape {x.shape}")
    if kernel.ndim != 2:
        raise ShapeError(f"conv2d kernel must be 2-D, got shape {kernel.shape}")
    out = conv2d_batch(x[None, None], kernel[None, None], stride)
    return out[0, 0]


def deconv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1) -> np.ndarray:
    """Adjoint of :func:`conv2d` for the same kernel/stride/padding.

    Maps an ``(H, W)`` input to ``(H*stride, W*stride)``; equivalently the
    transposed convolution obtained by inserting ``stride - 1`` zeros between
    input elements and correlating under the reversed padding offsets.
    """
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    if x.ndim != 2:
        raise ShapeError(f"deconv2d input must be 2-D, got shape {x.shape}")
    if kernel.ndim != 2:
        raise ShapeError(f"deconv2d kernel must be 2-D, got shape {kernel.shape}")
    out = deconv2d_batch(x[None, None], kernel[None, None], stride)
    return out[0, 0]


def dilate(x: np.ndarray, stride: int) -> np.ndarray:
    """Insert ``stride - 1`` zeros between adjacent elements of both axes.

    ``dilate(x, 1)`` is the identity. Output extent per axis is
    ``(n - 1) * stride + 1``.
    """
    if stride < 1:
        raise ValueError(f"dilation stride must be >= 1, got {stride}")
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"dilate input must be 2-D, got shape {x.shape}")
    h, w = x.shape
    out = np.zeros(((h - 1) * stride + 1, (w - 1) * stride + 1), dtype=x.dtype)
    out[::stride, ::stride] = x
    return out


def flatten(x: np.ndarray) -> np.ndarray:
    """Row-major flatten to a column vector of shape ``(size, 1)``."""
    x = np.asarray(x)
    return x.reshape(-1, 1)


def unflatten(v: np.ndarray, shape) -> np.ndarray:
    """Inverse of :func:`flatten`; rejects element-count mismatches."""
    v = np.asarray(v)
    n = int(np.prod(shape)) if len(shape) else 1
    if v.size != n:
        raise ShapeError(
            f"cannot unflatten {v.size} elements into shape {tuple(shape)} "
            f"({n} elements)")
    return v.reshape(shape)


def leaky_relu(x: np.ndarray, slope: float = 0.3) -> np.ndarray:
    """Elementwise ``max(x, slope * x)`` for ``0 <= slope <= 1``."""
    x = np.asarray(x)
    return np.where(x >= 0, x, x * np.asarray(slope, dtype=x.dtype))


def identity(x: np.ndarray) -> np.ndarray:
    return np.asarray(x)


# ---------------------------------------------------------------------------
# Batched multi-channel forms. Layout convention: activations are
# (batch, channels, height, width); kernel stacks are
# (in_channels, out_channels, kh, kw) where "in" is the layer the map comes
# FROM (the predicting layer) and "out" the layer it lands in.
# ---------------------------------------------------------------------------


def _check_stack(x, kernels, op):
    if x.ndim != 4:
        raise ShapeError(f"{op}: activations must be 4-D (N,C,H,W), got {x.shape}")
    if kernels.ndim != 4:
        raise ShapeError(
            f"{op}: kernel stack must be 4-D (Cin,Cout,kh,kw), got {kernels.shape}")
    if x.shape[1] != kernels.shape[0]:
        raise ShapeError(
            f"{op}: channel axis mismatch: activations carry {x.shape[1]} "
            f"channels, kernel stack expects {kernels.shape[0]}")


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int,
            out_h: int, out_w: int, lo_h: int, lo_w: int) -> np.ndarray:
    """Gather sliding windows into a (N*out_h*out_w, C*kh*kw) matrix."""
    n, c, h, w = x.shape
    hi_h = (out_h - 1) * stride + kh - h - lo_h
    hi_w = (out_w - 1) * stride + kw - w - lo_w
    xp = np.pad(x, ((0, 0), (0, 0), (lo_h, max(hi_h, 0)), (lo_w, max(hi_w, 0))))
    cols = np.empty((n, c, kh, kw, out_h, out_w), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            cols[:, :, ky, kx] = xp[:, :,
                                    ky:ky + (out_h - 1) * stride + 1:stride,
                                    kx:kx + (out_w - 1) * stride + 1:stride]
    # (N, OH, OW, C*kh*kw) row-major over batch and output pixels
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_h * out_w, c * kh * kw)


def conv2d_batch(x: np.ndarray, kernels: np.ndarray, stride: int) -> np.ndarray:
    """Strided SAME correlation, summed over input channels.

    ``out[n,j] = sum_i conv2d(x[n,i], kernels[i,j], stride)``.
    """
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    _check_stack(x, kernels, "conv2d_batch")
    n, ci, h, w = x.shape
    _, cj, kh, kw = kernels.shape
    oh, lo_h, _ = same_geometry(h, kh, stride)
    ow, lo_w, _ = same_geometry(w, kw, stride)
    cols = _im2col(x, kh, kw, stride, oh, ow, lo_h, lo_w)
    kmat = kernels.transpose(0, 2, 3, 1).reshape(ci * kh * kw, cj)
    out = cols @ kmat
    return out.reshape(n, oh, ow, cj).transpose(0, 3, 1, 2)


def deconv2d_batch(x: np.ndarray, kernels: np.ndarray, stride: int) -> np.ndarray:
    """Adjoint of :func:`conv2d_batch`: scatter each input pixel through the
    kernel stack onto an ``(H*stride, W*stride)`` canvas.

    ``out[n,j] = sum_i deconv2d(x[n,i], kernels[i,j], stride)``.
    """
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    _check_stack(x, kernels, "deconv2d_batch")
    n, ci, h, w = x.shape
    _, cj, kh, kw = kernels.shape
    oh, ow = h * stride, w * stride
    _, lo_h, _ = same_geometry(oh, kh, stride)
    _, lo_w, _ = same_geometry(ow, kw, stride)
    # one GEMM mixes channels for all kernel taps at once, then col2im scatters
    kmat = kernels.reshape(ci, cj * kh * kw)
    mixed = (x.transpose(0, 2, 3, 1).reshape(n * h * w, ci) @ kmat)
    mixed = mixed.reshape(n, h, w, cj, kh, kw)
    out = np.zeros((n, cj, oh + kh, ow + kw), dtype=mixed.dtype)
    for ky in range(kh):
        for kx in range(kw):
            out[:, :, ky:ky + (h - 1) * stride + 1:stride,
                kx:kx + (w - 1) * stride + 1:stride] += \
                mixed[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
    return out[:, :, lo_h:lo_h + oh, lo_w:lo_w + ow]


def corr_kernel_grad(pre: np.ndarray, err: np.ndarray, kh: int, kw: int,
                     stride: int) -> np.ndarray:
    """Stride-1 correlation of dilated presynaptic maps with error maps.

    Computes, per (input channel i, output channel j) pair, the kernel-shaped
    array ``G[i,j,k] = sum_n sum_o pre[n,i,o] * err_pad[n,j,o*stride + k]``
    averaged over the batch; this is the exact negative gradient of
    ``0.5 * sum ||err||^2`` with respect to the deconvolution kernels when
    ``err = target - deconv(pre)``.

    pre: (N, Ci, H, W) presynaptic (already activation-mapped) maps.
    err: (N, Cj, H*stride, W*stride) error maps in the layer below.
    """
    pre = np.asarray(pre)
    err = np.asarray(err)
    if pre.ndim != 4 or err.ndim != 4:
        raise ShapeError("corr_kernel_grad expects 4-D (N,C,H,W) arrays")
    n, ci, h, w = pre.shape
    n2, cj, eh, ew = err.shape
    if n2 != n:
        raise ShapeError(f"batch mismatch: {n} presynaptic vs {n2} error samples")
    if (eh, ew) != (h * stride, w * stride):
        raise ShapeError(
            f"error maps {eh}x{ew} do not match {h}x{w} maps at stride {stride}")
    oh, lo_h, _ = same_geometry(eh, kh, stride)
    ow, lo_w, _ = same_geometry(ew, kw, stride)
    cols = _im2col(err, kh, kw, stride, oh, ow, lo_h, lo_w)
    pmat = pre.transpose(0, 2, 3, 1).reshape(n * h * w, ci)
    grad = pmat.T @ cols                    # (Ci, Cj*kh*kw)
    return grad.reshape(ci, cj, kh, kw) / n
