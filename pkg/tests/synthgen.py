"""Synthetic desk-scale image corpora for the test and acceptance suites.

No benchmark downloads are available to the tests, so these generators
produce format-faithful stand-ins: seven-segment digit renderings shipped
through real IDX bytes (digit corpus), house-number-style color crops
written as tensor container files (street-number corpus, playing the role
of the externally converted dataset), and textured shape scenes packed as
CIFAR-10 binary records (natural-ish corpus). Everything is deterministic
per seed; the on-disk bytes exercise the same loaders the real datasets
would.
"""

import struct

import numpy as np

# classic seven-segment layout, boxes in unit coordinates
SEGMENTS = {
    "a": (0.15, 0.05, 0.85, 0.17), "b": (0.72, 0.10, 0.90, 0.52),
    "c": (0.72, 0.48, 0.90, 0.90), "d": (0.15, 0.83, 0.85, 0.95),
    "e": (0.10, 0.48, 0.28, 0.90), "f": (0.10, 0.10, 0.28, 0.52),
    "g": (0.15, 0.44, 0.85, 0.56),
}
DIGIT_SEGMENTS = {
    0: "abcdef", 1: "bc", 2: "abged", 3: "abgcd", 4: "fgbc",
    5: "afgcd", 6: "afgedc", 7: "abc", 8: "abcdefg", 9: "abcfgd",
}


def _box_blur(img, passes=2):
    size = img.shape[0]
    for _ in range(passes):
        p = np.pad(img, 1)
        img = sum(p[dy:dy + size, dx:dx + size]
                  for dy in range(3) for dx in range(3)) / 9.0
    return img


def render_digit(label, rng, size=28):
    """One jittered seven-segment digit as a float map in [0,1]."""
    img = np.zeros((size, size))
    ox, oy = rng.uniform(-0.08, 0.08, size=2)
    scale = rng.uniform(0.72, 1.0)
    shear = rng.uniform(-0.18, 0.18)
    yy, xx = np.mgrid[0:size, 0:size]
    u = (xx / (size - 1) - 0.5) / scale + 0.5 - ox
    v = (yy / (size - 1) - 0.5) / scale + 0.5 - oy
    u = u + shear * (v - 0.5)
    for name in DIGIT_SEGMENTS[int(label)]:
        x0, y0, x1, y1 = SEGMENTS[name]
        img[(u >= x0) & (u <= x1) & (v >= y0) & (v <= y1)] = 1.0
    img = _box_blur(img)
    return img * rng.uniform(0.8, 1.0)


def digit_corpus_idx_bytes(n, seed):
    """IDX-encoded image/label byte blobs for n rendered digits."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n).astype(np.uint8)
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    for i in range(n):
        images[i] = np.clip(render_digit(labels[i], rng) * 255, 0, 255)
    image_blob = struct.pack(">IIII", 0x803, n, 28, 28) + images.tobytes()
    label_blob = struct.pack(">II", 0x801, n) + labels.tobytes()
    return image_blob, label_blob


def _smooth_field(rng, size=32, passes=4):
    field = rng.random((size, size))
    return _box_blur(field, passes)


def street_number_corpus(n, seed):
    """House-number-style crops: colored background, 1-2 colored digits."""
    rng = np.random.default_rng(seed)
    out = np.zeros((n, 3, 32, 32), dtype=np.float32)
    for i in range(n):
        bg = np.array([rng.uniform(0.1, 0.9) for _ in range(3)])
        grad = np.linspace(-0.15, 0.15, 32)[None, :] * rng.choice([-1, 1])
        base = np.stack([np.clip(bg[c] + grad + 0.05 * _smooth_field(rng), 0, 1)
                         for c in range(3)])
        n_digits = int(rng.integers(1, 3))
        fg = np.array([rng.uniform(0, 1) for _ in range(3)])
        while np.linalg.norm(fg - bg) < 0.4:       # keep digits visible
            fg = np.array([rng.uniform(0, 1) for _ in range(3)])
        for k in range(n_digits):
            digit = render_digit(int(rng.integers(0, 10)), rng, size=22)
            y0 = int(rng.integers(0, 10))
            x0 = int(rng.integers(0, 10 if n_digits == 1 else 5)) + k * 11
            x0 = min(x0, 10)
            mask = np.zeros((32, 32))
            mask[y0:y0 + 22, x0:x0 + 22] = digit
            for c in range(3):
                base[c] = base[c] * (1 - mask) + fg[c] * mask
        out[i] = np.clip(base, 0, 1).astype(np.float32)
    return out


def natural_scene_corpus(n, seed):
    """Textured scenes: smooth color fields plus a few solid shapes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:32, 0:32]
    out = np.zeros((n, 3, 32, 32), dtype=np.float32)
    for i in range(n):
        img = np.stack([_smooth_field(rng, passes=int(rng.integers(2, 6)))
                        for _ in range(3)])
        img = 0.25 + 0.5 * img
        for _ in range(int(rng.integers(1, 4))):
            color = rng.uniform(0, 1, size=3)
            cy, cx = rng.integers(4, 28, size=2)
            if rng.random() < 0.5:
                r = int(rng.integers(3, 9))
                mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
            else:
                h, w = rng.integers(4, 14, size=2)
                mask = (np.abs(yy - cy) <= h // 2) & (np.abs(xx - cx) <= w // 2)
            for c in range(3):
                img[c][mask] = 0.7 * color[c] + 0.3 * img[c][mask]
        img += rng.normal(0, 0.02, size=img.shape)
        out[i] = np.clip(img, 0, 1).astype(np.float32)
    return out


def cifar_bin_bytes(images, labels):
    """Pack float [N,3,32,32] images into CIFAR-10 binary records."""
    records = []
    pix = np.clip(np.asarray(images) * 255, 0, 255).astype(np.uint8)
    for img, lab in zip(pix, labels):
        records.append(bytes([int(lab) % 10]) + img.tobytes())
    return b"".join(records)
