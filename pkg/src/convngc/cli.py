"""Command-line interface: convert / train / eval / inspect.

Every subcommand writes all of its artifacts under ``--out`` and finishes by
writing a ``manifest.txt`` listing them; exit code 0 means the operation
completed and the manifest is complete. Settings resolve with precedence
CLI flag > config file (``--config``, flat ``key=value`` lines) > built-in
default, and the effective configuration is echoed into the output
directory.

``--threads N`` pins the numeric kernel thread pools; ``--threads 1``
guarantees bit-reproducible runs. The flag must take effect before numpy
starts its thread pools, which is why this module defers all heavy imports
into the command handlers.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_ENV_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

CONFIG_KEYS = {
    "train_data": str, "val_data": str, "out_dir": str, "epochs": int,
    "batch_size": int, "optimizer": str, "alpha": float, "n_steps": int,
    "eval_n_steps": int, "beta": float, "gamma": float, "mu_z": float,
    "sigma_z": float, "leaky_slope": float, "seed": int,
    "checkpoint_every": int, "eval_every": int, "val_split": int,
    "channels": str, "tied_errors": bool, "use_bias": bool, "resume": str,
    "sigma": float, "mode": str,
}


def _apply_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise SystemExit("--threads must be >= 1")
    if "numpy" in sys.modules:
        print("warning: numpy already imported; --threads may not take "
              "full effect", file=sys.stderr)
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(n)


def parse_config_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment; unknown keys rejected."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            typ = CONFIG_KEYS[key]
            if typ is bool:
                values[key] = val.lower() in ("1", "true", "yes", "on")
            else:
                values[key] = typ(val)
    return values


def _merge_settings(defaults: dict, config_path: str | None,
                    cli_pairs: dict) -> dict:
    merged = dict(defaults)
    if config_path:
        file_vals = parse_config_file(config_path)
        merged.update({k: v for k, v in file_vals.items() if k in defaults})
    merged.update({k: v for k, v in cli_pairs.items() if v is not None})
    return merged


def _write_manifest(out_dir: str, paths: list) -> None:
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        for p in paths:
            fh.write(os.path.relpath(p, out_dir) + "\n")


def _echo_settings(out_dir: str, settings: dict) -> str:
    path = os.path.join(out_dir, "effective_config.kv")
    with open(path, "w") as fh:
        for key in sorted(settings):
            fh.write(f"{key}={settings[key]}\n")
    return path


def _load_batch(path: str):
    from .data import load_image_tensor
    return load_image_tensor(path)


# --- convert -----------------------------------------------------------------

def cmd_convert(args) -> int:
    from . import data
    from .data import save_tensor_file
    if args.kind == "mnist" and not (args.images and args.labels):
        raise SystemExit("convert --kind mnist needs --images and --labels")
    if args.kind == "cifar10" and not args.data:
        raise SystemExit("convert --kind cifar10 needs --data")
    os.makedirs(args.out, exist_ok=True)
    artifacts = []
    name = args.name
    if args.kind == "mnist":
        images, labels = data.load_idx_mnist(args.images, args.labels)
        if args.colorize:
            batch = data.colorize_mnist(images, labels)
        else:
            batch = data.replicate_to_rgb(images, source="mnist")
        name = name or ("color_mnist" if args.colorize else "mnist_rgb")
    elif args.kind == "cifar10":
        batch, labels = data.load_cifar10_bin(args.data)
        name = name or "cifar10"
    else:  # pragma: no cover - argparse restricts choices
        raise SystemExit(f"unknown kind {args.kind}")
    if args.limit:
        batch = batch.take(range(min(args.limit, len(batch))))
        labels = labels[:args.limit]
    data_path = os.path.join(args.out, f"{name}.ngct")
    save_tensor_file(data_path, batch.data)
    labels_path = os.path.join(args.out, f"{name}_labels.ngct")
    save_tensor_file(labels_path, labels.astype("float32"))
    artifacts += [data_path, labels_path]
    artifacts.append(_echo_settings(args.out, {
        "kind": args.kind, "colorize": bool(args.colorize),
        "limit": args.limit, "count": len(batch)}))
    _write_manifest(args.out, artifacts)
    print(f"wrote {len(batch)} images -> {data_path}")
    return 0


# --- train -------------------------------------------------------------------

def cmd_train(args) -> int:
    from .trainer import TrainConfig, train
    defaults = {k: v for k, v in vars(TrainConfig()).items()}
    defaults["channels"] = ",".join(str(c) for c in defaults["channels"])
    cli_pairs = {
        "train_data": args.data, "out_dir": args.out, "epochs": args.epochs,
        "batch_size": args.batch_size, "optimizer": args.optimizer,
        "alpha": args.alpha, "n_steps": args.T, "beta": args.beta,
        "gamma": args.gamma, "seed": args.seed, "resume": args.resume,
        "val_split": args.val_split, "eval_every": args.eval_every,
        "checkpoint_every": args.checkpoint_every,
    }
    settings = _merge_settings(defaults, args.config, cli_pairs)
    settings["channels"] = tuple(
        int(c) for c in str(settings["channels"]).split(","))
    config = TrainConfig(**settings)
    if not config.train_data:
        raise SystemExit("train: no training data (use --data or a config file)")
    os.makedirs(config.out_dir, exist_ok=True)
    result = train(config)
    artifacts = [result.checkpoint_path, result.log_path,
                 os.path.join(config.out_dir, "effective_config.kv")]
    for entry in sorted(os.listdir(config.out_dir)):
        full = os.path.join(config.out_dir, entry)
        if full not in artifacts and entry != "manifest.txt":
            artifacts.append(full)
    _write_manifest(config.out_dir, artifacts)
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


# --- eval --------------------------------------------------------------------

def cmd_eval(args) -> int:
    from . import checkpoint as ckpt
    from .metrics import report_kv, report_text
    from .pnm import write_ppm
    from .trainer import (evaluate_denoising, evaluate_ood,
                          evaluate_reconstruction, reconstruct)
    import numpy as np

    defaults = {"seed": 1234, "n_steps": 0, "sigma": 0.1, "mode": "recon"}
    settings = _merge_settings(defaults, args.config, {
        "seed": args.seed, "n_steps": args.T, "sigma": args.sigma,
        "mode": args.mode})
    os.makedirs(args.out, exist_ok=True)
    model, _ = ckpt.load_checkpoint(args.ckpt)
    dataset = _load_batch(args.data)
    n_steps = settings["n_steps"] or None
    mode = settings["mode"]
    if mode == "recon":
        report = evaluate_reconstruction(model, dataset, n_steps,
                                         settings["seed"])
    elif mode == "denoise":
        report = evaluate_denoising(model, dataset, settings["sigma"],
                                    settings["seed"], n_steps)
    elif mode == "ood":
        report = evaluate_ood(model, dataset, args.source or "source",
                              args.target or os.path.basename(args.data),
                              n_steps, settings["seed"])
    else:
        raise SystemExit(f"unknown eval mode: {mode}")

    artifacts = []
    for suffix, blob in (("txt", report_text(report)), ("kv", report_kv(report))):
        path = os.path.join(args.out, f"metrics.{suffix}")
        with open(path, "w") as fh:
            fh.write(blob)
        artifacts.append(path)
    if args.dump:
        n = min(args.dump, len(dataset))
        images = dataset.data[:n]
        if mode == "denoise":
            from .data import corrupt_gaussian, ImageBatch
            images = corrupt_gaussian(ImageBatch(images), settings["sigma"],
                                      settings["seed"]).data
        outs = reconstruct(model, images,
                           "init_only" if mode == "denoise" else "clamped",
                           n_steps, settings["seed"])
        for i in range(n):
            path = os.path.join(args.out, f"recon_{i:04d}.ppm")
            write_ppm(path, np.clip(outs[i], 0, 1) * 255)
            artifacts.append(path)
    artifacts.append(_echo_settings(args.out, {**settings, "ckpt": args.ckpt,
                                               "data": args.data}))
    _write_manifest(args.out, artifacts)
    summary = report.summary()
    print(f"{mode}: mse {summary['mse_mean']:.4f}  ssim "
          f"{summary['ssim_mean']:.4f}  psnr {summary['psnr_mean']:.4f} "
          f"({report.count} images)")
    return 0


# --- inspect -----------------------------------------------------------------

def cmd_inspect(args) -> int:
    from . import checkpoint as ckpt
    from .model import run_inference
    from .pnm import to_uint8, write_pgm, write_ppm
    import numpy as np

    defaults = {"seed": 1234, "n_steps": 0, "index": 0}
    settings = _merge_settings(defaults, args.config, {
        "seed": args.seed, "n_steps": args.T, "index": args.index})
    os.makedirs(args.out, exist_ok=True)
    model, _ = ckpt.load_checkpoint(args.ckpt)
    dataset = _load_batch(args.data)
    idx = settings["index"]
    if not 0 <= idx < len(dataset):
        raise SystemExit(f"--index {idx} out of range ({len(dataset)} images)")
    x = dataset.data[idx:idx + 1]
    state = run_inference(model, x, "clamped", settings["n_steps"] or None,
                          rng=np.random.default_rng(settings["seed"]))
    artifacts = []
    for l in range(model.top + 1):
        maps = state.z[l][0]
        for c in range(maps.shape[0]):
            path = os.path.join(args.out, f"z{l}_c{c:02d}.pgm")
            write_pgm(path, to_uint8(maps[c]))
            artifacts.append(path)
    recon_path = os.path.join(args.out, "reconstruction.ppm")
    write_ppm(recon_path, np.clip(state.output_image()[0], 0, 1) * 255)
    artifacts.append(recon_path)
    artifacts.append(_echo_settings(args.out, {**settings, "ckpt": args.ckpt,
                                               "data": args.data}))
    _write_manifest(args.out, artifacts)
    print(f"wrote {len(artifacts) - 2} feature maps + reconstruction to "
          f"{args.out}")
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convngc",
        description="Convolutional generative-coding models: dataset "
                    "conversion, training, evaluation, inspection.")
    parser.add_argument("--threads", type=int, default=None,
                        help="numeric kernel threads (1 = bit-reproducible)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="datasets -> tensor container files")
    p.add_argument("--kind", choices=("mnist", "cifar10"), required=True)
    p.add_argument("--images", help="IDX image file (mnist)")
    p.add_argument("--labels", help="IDX label file (mnist)")
    p.add_argument("--data", nargs="+", help="CIFAR-10 binary batch files")
    p.add_argument("--colorize", action="store_true",
                   help="apply two-hue colorization to MNIST digits")
    p.add_argument("--limit", type=int, default=0, help="keep first N images")
    p.add_argument("--name", default="", help="output file stem")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--data", help="training tensor file (N,3,32,32)")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--optimizer", choices=("adam", "norm_sgd"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--T", type=int, help="stimulus window length")
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--val-split", type=int, dest="val_split")
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--config")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="tensor file (N,3,32,32)")
    p.add_argument("--mode", choices=("recon", "denoise", "ood"))
    p.add_argument("--sigma", type=float, help="denoising noise std")
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--source", help="OOD: training dataset name")
    p.add_argument("--target", help="OOD: evaluation dataset name")
    p.add_argument("--dump", type=int, default=0,
                   help="write first N reconstructions as PPM")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="dump latent feature maps for one image")
    p.add_argument("--config")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
