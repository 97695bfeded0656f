"""Denoise by dynamics: clamp the noisy image only at the first step.

Trains briefly on clean digits, corrupts test images with Gaussian pixel
noise, and lets the state dynamics pull the bottom layer back toward the
model's learned manifold. Saves clean|noisy|denoised triptychs.
Run: python demos/04_denoising.py  (reuses the corpus from demo 03)
"""

import importlib.util
import os

import numpy as np

from convngc import ImageBatch, corrupt_gaussian, ssim
from convngc.pnm import write_ppm
from convngc.trainer import TrainConfig, reconstruct, train

_spec = importlib.util.spec_from_file_location(
    "training_demo", os.path.join(os.path.dirname(__file__),
                                  "03_training_reconstruction.py"))
training_demo = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(training_demo)


def main():
    out_dir = os.path.join(os.path.dirname(__file__), "out", "denoising")
    os.makedirs(out_dir, exist_ok=True)
    train_set = ImageBatch(training_demo.make_digits(2000, seed=1))
    test_set = ImageBatch(training_demo.make_digits(50, seed=3))

    config = TrainConfig(out_dir=out_dir, epochs=4, batch_size=500,
                         n_steps=20, alpha=0.001, seed=42)
    print("training...")
    result = train(config, train_set=train_set)

    noisy = corrupt_gaussian(test_set, sigma=0.1, seed=9)
    denoised = reconstruct(result.model, noisy.data, "init_only", n_steps=60)

    def score(batch):
        vals = [ssim(np.clip(test_set.data[i], 0, 1) * 255,
                     np.clip(batch[i], 0, 1) * 255)
                for i in range(len(test_set))]
        return float(np.mean(vals))

    print(f"mean SSIM vs clean:  noisy {score(noisy.data):.4f}   "
          f"denoised {score(denoised):.4f}")

    for i in range(4):
        trip = np.concatenate([test_set.data[i],
                               np.clip(noisy.data[i], 0, 1),
                               np.clip(denoised[i], 0, 1)], axis=2) * 255
        write_ppm(os.path.join(out_dir, f"triptych_{i}.ppm"), trip)
    print(f"wrote clean|noisy|denoised triptychs to {out_dir}")


if __name__ == "__main__":
    main()
