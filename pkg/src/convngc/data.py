"""Dataset ingestion and batch plumbing.

Readers for the two on-disk formats the experiments consume directly
(IDX-encoded MNIST and CIFAR-10 binary), the neutral ``NGCT`` tensor
container used for everything converted externally (SVHN, CINIC-10), pixel
scaling, Gaussian corruption, and mini-batch iteration. Loaders are pure and
deterministic; corruption and shuffling are the only stochastic pieces and
both are fully seed-determined.

All image batches are float arrays shaped (N, 3, 32, 32) scaled to [0, 1]
once standardized; corruption may push values outside that range on purpose
(the model sees the raw noise, metrics compare against the clean originals).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
TENSOR_FILE_MAGIC = b"NGCT"
CIFAR_RECORD_BYTES = 3073


class DataFormatError(ValueError):
    """Raised when an input file violates its declared format."""


@dataclass
class ImageBatch:
    """A batch of images plus per-image provenance strings."""

    data: np.ndarray                      # (N, C, H, W) float
    ids: list = field(default_factory=list)

    def __post_init__(self):
        if not self.ids:
            self.ids = [str(i) for i in range(len(self.data))]
        if len(self.ids) != len(self.data):
            raise ValueError(
                f"{len(self.ids)} ids for {len(self.data)} images")

    def __len__(self) -> int:
        return len(self.data)

    def take(self, indices) -> "ImageBatch":
        return ImageBatch(self.data[indices],
                          [self.ids[int(i)] for i in indices])


def _read_exact(path: str, expected: int | None = None) -> bytes:
    with open(path, "rb") as fh:
        blob = fh.read()
    if expected is not None and len(blob) != expected:
        raise DataFormatError(
            f"{path}: expected {expected} bytes, found {len(blob)}")
    return blob


def load_idx_mnist(images_path: str, labels_path: str):
    """Read an IDX image/label pair into ([N,1,H,W] floats in [0,1], labels).

    Headers are big-endian; pixel bytes are scaled by 1/255.
    """
    blob = _read_exact(images_path)
    if len(blob) < 16:
        raise DataFormatError(f"{images_path}: truncated IDX header")
    magic, n, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(
            f"{images_path}: bad IDX image magic 0x{magic:08x} "
            f"(want 0x{IDX_IMAGES_MAGIC:08x})")
    want = 16 + n * rows * cols
    if len(blob) != want:
        raise DataFormatError(
            f"{images_path}: payload holds {len(blob)} bytes, header "
            f"declares {want}")
    images = np.frombuffer(blob, dtype=np.uint8, offset=16)
    images = images.reshape(n, 1, rows, cols).astype(np.float32) / 255.0

    lblob = _read_exact(labels_path)
    if len(lblob) < 8:
        raise DataFormatError(f"{labels_path}: truncated IDX header")
    lmagic, ln = struct.unpack(">II", lblob[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise DataFormatError(
            f"{labels_path}: bad IDX label magic 0x{lmagic:08x} "
            f"(want 0x{IDX_LABELS_MAGIC:08x})")
    if len(lblob) != 8 + ln:
        raise DataFormatError(
            f"{labels_path}: payload holds {len(lblob)} bytes, header "
            f"declares {8 + ln}")
    if ln != n:
        raise DataFormatError(
            f"label count {ln} does not match image count {n}")
    labels = np.frombuffer(lblob, dtype=np.uint8, offset=8).astype(np.int64)
    return images, labels


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Endpoint-aligned separable bilinear resize of one 2-D map."""
    in_h, in_w = img.shape
    def axis_weights(n_in, n_out):
        if n_in == 1:
            return np.zeros(n_out, dtype=int), np.zeros(n_out, dtype=int), \
                np.zeros(n_out)
        src = np.linspace(0.0, n_in - 1.0, n_out)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0
    r0, r1, wr = axis_weights(in_h, out_h)
    c0, c1, wc = axis_weights(in_w, out_w)
    rows = img[r0, :] * (1.0 - wr)[:, None] + img[r1, :] * wr[:, None]
    return rows[:, c0] * (1.0 - wc)[None, :] + rows[:, c1] * wc[None, :]


def colorize_mnist(gray: np.ndarray, labels: np.ndarray,
                   source: str = "mnist") -> ImageBatch:
    """Resize 28x28 grayscale digits to 32x32 and place them in one color
    channel: red for even labels, green for odd, blue always empty.

    The parity rule is an arbitrary deterministic assignment; only the fact
    that every image is single-hue matters for the unsupervised experiments.
    """
    gray = np.asarray(gray)
    if gray.ndim != 4 or gray.shape[1] != 1 or gray.shape[2:] != (28, 28):
        raise DataFormatError(
            f"colorize_mnist wants (N,1,28,28) grayscale, got {gray.shape}")
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 9:
        raise ValueError("labels must lie in [0, 9]")
    n = gray.shape[0]
    out = np.zeros((n, 3, 32, 32), dtype=np.float32)
    for i in range(n):
        resized = resize_bilinear(gray[i, 0].astype(np.float64), 32, 32)
        channel = 0 if labels[i] % 2 == 0 else 1
        out[i, channel] = resized.astype(np.float32)
    ids = [f"{source}:{i}" for i in range(n)]
    return ImageBatch(out, ids)


def replicate_to_rgb(gray: np.ndarray, source: str = "gray") -> ImageBatch:
    """Standardize (N,1,H,W) grayscale to (N,3,32,32) by resize + replicate."""
    gray = np.asarray(gray)
    n = gray.shape[0]
    out = np.zeros((n, 3, 32, 32), dtype=np.float32)
    for i in range(n):
        r = resize_bilinear(gray[i, 0].astype(np.float64), 32, 32)
        out[i, :] = r.astype(np.float32)[None]
    return ImageBatch(out, [f"{source}:{i}" for i in range(n)])


def load_cifar10_bin(paths) -> tuple:
    """Read CIFAR-10 binary batch files: 3073-byte records, one label byte
    followed by 3072 channel-planar pixel bytes (R plane, G plane, B plane).
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    chunks, labels, ids = [], [], []
    for path in paths:
        blob = _read_exact(path)
        if len(blob) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: length {len(blob)} is not a multiple of "
                f"{CIFAR_RECORD_BYTES}")
        recs = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(recs[:, 0].astype(np.int64))
        chunks.append(recs[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0)
        base = os.path.basename(str(path))
        ids.extend(f"{base}:{i}" for i in range(len(recs)))
    data = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
    lab = np.concatenate(labels) if len(labels) > 1 else labels[0]
    return ImageBatch(data, ids), lab


def save_tensor_file(path: str, tensor: np.ndarray) -> None:
    """Write the neutral tensor container: b"NGCT", rank, extents, then the
    row-major payload as little-endian 32-bit floats."""
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(TENSOR_FILE_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_tensor_file(path: str) -> np.ndarray:
    blob = _read_exact(path)
    if blob[:4] != TENSOR_FILE_MAGIC:
        raise DataFormatError(f"{path}: bad magic {blob[:4]!r}")
    (rank,) = struct.unpack_from("<I", blob, 4)
    header = 8 + 4 * rank
    if len(blob) < header:
        raise DataFormatError(f"{path}: truncated header (rank {rank})")
    shape = struct.unpack_from(f"<{rank}I", blob, 8)
    count = int(np.prod(shape)) if rank else 1
    want = header + 4 * count
    if len(blob) != want:
        raise DataFormatError(
            f"{path}: payload holds {len(blob) - header} bytes, extents "
            f"declare {4 * count}")
    data = np.frombuffer(blob, dtype="<f4", offset=header, count=count)
    return data.reshape(shape).copy()


def load_image_tensor(path: str) -> ImageBatch:
    """Load an (N,3,32,32) image batch from a tensor container file."""
    arr = load_tensor_file(path)
    if arr.ndim != 4 or arr.shape[1:] != (3, 32, 32):
        raise DataFormatError(
            f"{path}: expected an (N,3,32,32) image tensor, got {arr.shape}")
    base = os.path.basename(str(path))
    return ImageBatch(arr, [f"{base}:{i}" for i in range(len(arr))])


def corrupt_gaussian(batch: ImageBatch, sigma: float, seed: int) -> ImageBatch:
    """Add i.i.d. zero-mean Gaussian pixel noise on the [0,1] scale.

    Values are deliberately not re-clipped; the corruption is what the model
    sees. Fully determined by ``seed``.
    """
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=batch.data.shape)
    return ImageBatch((batch.data + noise.astype(batch.data.dtype)),
                      list(batch.ids))


def batch_iter(dataset: ImageBatch, batch_size: int,
               shuffle_seed: int | None = None):
    """Yield mini-batches; a trailing short batch is emitted, never dropped.

    With a seed, the order is a seed-determined permutation; without one the
    dataset order is kept.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    n = len(dataset)
    order = np.arange(n)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        yield dataset.take(order[start:start + batch_size])
