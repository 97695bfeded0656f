"""Train a small model on synthetic two-hue digits and reconstruct.

A compressed version of the full experiment: renders a digit corpus, runs a
few epochs of inference-then-Hebbian-update training, and reports MSE / SSIM
/ PSNR on held-out images. Writes a handful of side-by-side PPM dumps under
demos/out/. Takes a few minutes on a laptop CPU.
Run: python demos/03_training_reconstruction.py
"""

import os
import time

import numpy as np

from convngc import ImageBatch
from convngc.pnm import write_ppm
from convngc.trainer import TrainConfig, evaluate_reconstruction, reconstruct, train

# --- inline corpus: jittered seven-segment digits, red or green ------------
SEGMENTS = {
    "a": (0.15, 0.05, 0.85, 0.17), "b": (0.72, 0.10, 0.90, 0.52),
    "c": (0.72, 0.48, 0.90, 0.90), "d": (0.15, 0.83, 0.85, 0.95),
    "e": (0.10, 0.48, 0.28, 0.90), "f": (0.10, 0.10, 0.28, 0.52),
    "g": (0.15, 0.44, 0.85, 0.56),
}
DIGITS = {0: "abcdef", 1: "bc", 2: "abged", 3: "abgcd", 4: "fgbc",
          5: "afgcd", 6: "afgedc", 7: "abc", 8: "abcdefg", 9: "abcfgd"}


def make_digits(n, seed):
    rng = np.random.default_rng(seed)
    out = np.zeros((n, 3, 32, 32), dtype=np.float32)
    yy, xx = np.mgrid[0:32, 0:32]
    for i in range(n):
        label = int(rng.integers(0, 10))
        scale = rng.uniform(0.7, 1.0)
        ox, oy = rng.uniform(-0.08, 0.08, size=2)
        u = (xx / 31 - 0.5) / scale + 0.5 - ox
        v = (yy / 31 - 0.5) / scale + 0.5 - oy
        img = np.zeros((32, 32))
        for s in DIGITS[label]:
            x0, y0, x1, y1 = SEGMENTS[s]
            img[(u >= x0) & (u <= x1) & (v >= y0) & (v <= y1)] = 1.0
        p = np.pad(img, 1)
        img = sum(p[a:a + 32, b:b + 32] for a in range(3) for b in range(3)) / 9
        out[i, 0 if label % 2 == 0 else 1] = img
    return out


def main():
    out_dir = os.path.join(os.path.dirname(__file__), "out", "training")
    os.makedirs(out_dir, exist_ok=True)
    train_set = ImageBatch(make_digits(2000, seed=1))
    test_set = ImageBatch(make_digits(100, seed=2))

    config = TrainConfig(out_dir=out_dir, epochs=4, batch_size=500,
                         n_steps=20, alpha=0.001, seed=42)
    print("training 2000 images x 4 epochs (window 20)...")
    t0 = time.time()
    result = train(config, train_set=train_set)
    print(f"done in {time.time() - t0:.0f}s; checkpoint at "
          f"{result.checkpoint_path}")

    report = evaluate_reconstruction(result.model, test_set, n_steps=60)
    s = report.summary()
    print(f"held-out reconstruction: MSE {s['mse_mean']:.2f}  "
          f"SSIM {s['ssim_mean']:.4f}  PSNR {s['psnr_mean']:.2f} dB")

    outs = reconstruct(result.model, test_set.data[:4], "clamped", n_steps=60)
    for i in range(4):
        pair = np.concatenate([test_set.data[i], np.clip(outs[i], 0, 1)],
                              axis=2) * 255
        write_ppm(os.path.join(out_dir, f"pair_{i}.ppm"), pair)
    print(f"wrote original|reconstruction pairs to {out_dir}")


if __name__ == "__main__":
    main()
