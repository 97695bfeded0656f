"""Minimal binary PGM/PPM writers (P5/P6), codec-free image dumps."""

from __future__ import annotations

import numpy as np


def to_uint8(arr: np.ndarray) -> np.ndarray:
    """Min-max normalize any real map onto 0..255 (constant maps become 0)."""
    arr = np.asarray(arr, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        return np.zeros(arr.shape, dtype=np.uint8)
    return np.round((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path: str, gray: np.ndarray) -> None:
    """8-bit binary PGM from a 2-D uint8 (or normalizable) array."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"PGM wants a 2-D map, got shape {gray.shape}")
    if gray.dtype != np.uint8:
        gray = to_uint8(gray)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(gray).tobytes())


def write_ppm(path: str, rgb: np.ndarray) -> None:
    """8-bit binary PPM from a (3,H,W) or (H,W,3) array."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3:
        raise ValueError(f"PPM wants a 3-D array, got shape {rgb.shape}")
    if rgb.shape[0] == 3 and rgb.shape[2] != 3:
        rgb = rgb.transpose(1, 2, 0)
    if rgb.shape[2] != 3:
        raise ValueError(f"PPM wants 3 channels, got shape {rgb.shape}")
    if rgb.dtype != np.uint8:
        rgb = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 255.0)
        rgb = np.round(rgb).astype(np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(rgb).tobytes())
