"""Look inside: dump every latent feature map for one stimulus.

After a short training run, clamps a single image and writes each settled
latent map as a PGM image (one file per channel per layer), mirroring the
`convngc inspect` subcommand. Higher layers show coarser, image-pyramid-like
versions of the stimulus.
Run: python demos/05_feature_maps.py
"""

import importlib.util
import os

import numpy as np

from convngc import ImageBatch, run_inference
from convngc.pnm import to_uint8, write_pgm, write_ppm
from convngc.trainer import TrainConfig, train

_spec = importlib.util.spec_from_file_location(
    "training_demo", os.path.join(os.path.dirname(__file__),
                                  "03_training_reconstruction.py"))
training_demo = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(training_demo)


def main():
    out_dir = os.path.join(os.path.dirname(__file__), "out", "feature_maps")
    os.makedirs(out_dir, exist_ok=True)
    train_set = ImageBatch(training_demo.make_digits(2000, seed=1))
    config = TrainConfig(out_dir=out_dir, epochs=3, batch_size=500,
                         n_steps=20, alpha=0.001, seed=42)
    print("training...")
    result = train(config, train_set=train_set)

    x = training_demo.make_digits(1, seed=77)
    state = run_inference(result.model, x, "clamped", 60,
                          rng=np.random.default_rng(0))
    count = 0
    for l in range(result.model.top + 1):
        for c in range(state.z[l].shape[1]):
            write_pgm(os.path.join(out_dir, f"z{l}_c{c:02d}.pgm"),
                      to_uint8(state.z[l][0, c]))
            count += 1
    write_ppm(os.path.join(out_dir, "reconstruction.ppm"),
              np.clip(state.output_image()[0], 0, 1) * 255)
    print(f"wrote {count} feature maps + reconstruction to {out_dir}")


if __name__ == "__main__":
    main()
