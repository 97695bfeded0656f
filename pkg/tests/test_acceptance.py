"""Acceptance gate: the nine shipping criteria, one test per criterion.

Each test prints one ``ACCEPTANCE CRITERION n: PASS/FAIL`` line (visible
with ``pytest -rA`` or ``-s``) and asserts the stated tolerance. Criteria 5
to 7 train desk-scale models from scratch on synthetic, format-faithful
corpora (see synthgen.py) and dominate the suite's runtime (~30-40 CPU
minutes total).

Full-scale paper-reference numbers (e.g. Color-MNIST reconstruction MSE
11.28 / SSIM 0.9838, OOD SSIM 0.98) are NOT targets here; the desk-scale
thresholds below are the contract.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

import convngc as C
from convngc import metrics, ops
from convngc.trainer import (
    TrainConfig,
    evaluate_denoising,
    evaluate_reconstruction,
    train,
)

import synthgen
from oracles import naive_conv2d, naive_deconv2d

TRAIN_T = 20          # window during training (T=60 at evaluation time)
EVAL_T = 60


def criterion(num: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE CRITERION {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# --- shared desk-scale fixtures ------------------------------------------------

@pytest.fixture(scope="module")
def digit_corpus(tmp_path_factory):
    """10,000 train + 500 held-out two-hue digits through the real IDX path."""
    root = tmp_path_factory.mktemp("digits")
    images_blob, labels_blob = synthgen.digit_corpus_idx_bytes(10500, seed=42)
    (root / "images.idx").write_bytes(images_blob)
    (root / "labels.idx").write_bytes(labels_blob)
    gray, labels = C.load_idx_mnist(str(root / "images.idx"),
                                    str(root / "labels.idx"))
    batch = C.colorize_mnist(gray, labels)
    train_set = batch.take(np.arange(10000))
    test_set = batch.take(np.arange(10000, 10500))
    return train_set, test_set


@pytest.fixture(scope="module")
def digit_model(digit_corpus, tmp_path_factory):
    """The criterion-5 protocol: 10k images, batch 500, Adam 1e-3, 10 epochs."""
    train_set, _ = digit_corpus
    out = tmp_path_factory.mktemp("digit_model")
    config = TrainConfig(out_dir=str(out), epochs=10, batch_size=500,
                         optimizer="adam", alpha=0.001, n_steps=TRAIN_T,
                         seed=1)
    t0 = time.time()
    result = train(config, train_set=train_set)
    print(f"[criterion 5 setup] training took {time.time() - t0:.0f}s")
    return result.model


@pytest.fixture(scope="module")
def street_scene_corpora(tmp_path_factory):
    """Street-number tensor file (pre-converted contract) + scene images
    shipped through real CIFAR-10 binary records."""
    root = tmp_path_factory.mktemp("ood")
    streets = synthgen.street_number_corpus(10000, seed=100)
    street_path = root / "streetnums.ngct"
    C.save_tensor_file(str(street_path), streets)
    scenes = synthgen.natural_scene_corpus(2000, seed=200)
    blob = synthgen.cifar_bin_bytes(scenes, [i % 10 for i in range(len(scenes))])
    (root / "scenes.bin").write_bytes(blob)
    scene_batch, _ = C.load_cifar10_bin(str(root / "scenes.bin"))
    return C.load_image_tensor(str(street_path)), scene_batch


# --- criteria ------------------------------------------------------------------

def test_criterion_1_parameter_count():
    tied = C.count_parameters(C.ConvNgcModel(C.default_config()))
    untied = C.count_parameters(
        C.ConvNgcModel(C.default_config(tied_errors=False)))
    criterion(1, tied == 9225 and untied == 18450,
              f"tied={tied} (want 9225), untied={untied} (want 18450)")


def test_criterion_2_operator_oracles():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst_conv = worst_deconv = worst_adj = 0.0
    for _ in range(100):
        s = int(rng.integers(1, 3))
        h, w = (int(rng.integers(1, 8)) for _ in range(2))
        kh, kw = (int(rng.integers(1, 6)) for _ in range(2))
        x = rng.normal(size=(h, w))
        k = rng.normal(size=(kh, kw))
        worst_conv = max(worst_conv, float(np.max(np.abs(
            ops.conv2d(x, k, s) - naive_conv2d(x, k, s)), initial=0.0)))
        worst_deconv = max(worst_deconv, float(np.max(np.abs(
            ops.deconv2d(x, k, s) - naive_deconv2d(x, k, s)), initial=0.0)))
        y = rng.normal(size=(h * s, w * s))
        lhs = float(np.sum(ops.deconv2d(x, k, s) * y))
        rhs = float(np.sum(x * ops.conv2d(y, k, s)))
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(1.0, abs(rhs)))
    elapsed = time.time() - t0
    ok = worst_conv <= 1e-10 and worst_deconv <= 1e-10 \
        and worst_adj <= 1e-10 and elapsed < 60
    criterion(2, ok, f"conv err {worst_conv:.2e}, deconv err "
              f"{worst_deconv:.2e}, adjoint rel {worst_adj:.2e} "
              f"(tol 1e-10 each), {elapsed:.1f}s < 60s")


def _random_toy(rng, phi):
    chans = [int(rng.integers(1, 3)) for _ in range(3)]
    layers = [C.LayerSpec(chans[0], 8, 8, phi=phi, g="identity"),
              C.LayerSpec(chans[1], 4, 4, phi=phi, g="identity"),
              C.LayerSpec(chans[2], 2, 2, phi=phi, g="identity")]
    cfg = C.ModelConfig(layers=layers, gamma=0.0, dtype="float64")
    model = C.ConvNgcModel(cfg).init_params(rng)
    state = C.ancestral_init(model, 1, rng)
    for l in range(3):
        state.z[l] = rng.normal(size=state.z[l].shape)
    C.predict_all(model, state)
    return model, state


def _energy(model, z_list):
    st = C.InferenceState(z=[a.copy() for a in z_list], z_bar=[None] * 3,
                          e=[None] * 3, clamped=[False] * 3)
    C.predict_all(model, st)
    return C.total_discrepancy(st)


def test_criterion_3_gradient_oracles():
    t0 = time.time()
    eps = 1e-6
    worst_state = worst_weight = 0.0
    rng = np.random.default_rng(303)
    for instance in range(20):
        # state-correction direction: identity activations, gamma 0, tied
        model, state = _random_toy(rng, "identity")
        z0 = [a.copy() for a in state.z]
        C.correct_states(model, state)
        for l in (1, 2):
            d = (state.z[l] - z0[l]) / model.config.beta
            num = np.zeros_like(z0[l])
            for idx in np.ndindex(z0[l].shape):
                zp = [a.copy() for a in z0]
                zm = [a.copy() for a in z0]
                zp[l][idx] += eps
                zm[l][idx] -= eps
                num[idx] = (_energy(model, zp) - _energy(model, zm)) / (2 * eps)
            rel = np.max(np.abs(d + num)) / max(np.max(np.abs(num)), 1e-12)
            worst_state = max(worst_state, float(rel))

        # weight update: identity g, alternating identity / leaky phi
        model, state = _random_toy(
            rng, "identity" if instance % 2 == 0 else "leaky_relu")
        z_fixed = [a.copy() for a in state.z]
        upd = C.compute_updates(model, state)
        for l in (1, 2):
            num = np.zeros_like(model.W[l])
            for idx in np.ndindex(model.W[l].shape):
                orig = model.W[l][idx]
                model.W[l][idx] = orig + eps
                e_plus = _energy(model, z_fixed)
                model.W[l][idx] = orig - eps
                e_minus = _energy(model, z_fixed)
                model.W[l][idx] = orig
                num[idx] = (e_plus - e_minus) / (2 * eps)
            num /= state.batch_size
            rel = np.max(np.abs(upd.dW[l] + num)) / max(np.max(np.abs(num)),
                                                        1e-12)
            worst_weight = max(worst_weight, float(rel))
    elapsed = time.time() - t0
    ok = worst_state <= 1e-5 and worst_weight <= 1e-5 and elapsed < 300
    criterion(3, ok, f"20 instances: state rel {worst_state:.2e}, weight rel "
              f"{worst_weight:.2e} (tol 1e-5), {elapsed:.0f}s < 300s")


def test_criterion_4_energy_descent():
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        cfg = C.default_config(beta=0.05, gamma=0.0, dtype="float64")
        model = C.ConvNgcModel(cfg).init_params(rng)
        x = rng.uniform(0.0, 1.0, size=(1, 3, 32, 32))
        state = C.run_inference(model, x, "clamped", 60, rng=rng)
        if state.tod_trace[-1] < state.tod_trace[0]:
            wins += 1
    criterion(4, wins >= 95, f"ToD(T=60) < ToD(1) in {wins}/100 seeded "
              f"trials (need >= 95)")


def test_criterion_5_desk_scale_reconstruction(digit_corpus, digit_model):
    _, test_set = digit_corpus
    report = evaluate_reconstruction(digit_model, test_set, n_steps=EVAL_T)
    ssim_mean = report.mean_std("ssim")[0]
    mse_mean = report.mean_std("mse")[0]
    ok = ssim_mean >= 0.90 and mse_mean <= 60.0
    criterion(5, ok, f"held-out 500 images: SSIM {ssim_mean:.4f} (>= 0.90), "
              f"MSE {mse_mean:.2f} (<= 60) at eval window {EVAL_T}")


def test_criterion_6_denoising_improves(digit_corpus, digit_model):
    _, test_set = digit_corpus
    sigma, seed = 0.1, 777
    report = evaluate_denoising(digit_model, test_set, sigma=sigma, seed=seed,
                                n_steps=EVAL_T)
    noisy = C.corrupt_gaussian(test_set, sigma, seed)
    base_vals = [metrics.ssim(np.clip(test_set.data[i], 0, 1) * 255,
                              np.clip(noisy.data[i], 0, 1) * 255)
                 for i in range(len(test_set))]
    ssim_out = report.mean_std("ssim")[0]
    ssim_noisy = float(np.mean(base_vals))
    criterion(6, ssim_out > ssim_noisy,
              f"init-only denoising over {len(test_set)} images: "
              f"SSIM(output, clean) {ssim_out:.4f} > "
              f"SSIM(corrupted, clean) {ssim_noisy:.4f}")


def test_criterion_7_ood_pipeline(street_scene_corpora, tmp_path_factory):
    street_set, scene_set = street_scene_corpora

    untrained = C.ConvNgcModel(C.default_config())
    untrained.init_params(np.random.default_rng([9, 0]))
    base = evaluate_reconstruction(untrained, scene_set, n_steps=EVAL_T,
                                   tag="untrained->scenes")
    out = tmp_path_factory.mktemp("street_model")
    config = TrainConfig(out_dir=str(out), epochs=6, batch_size=500,
                         optimizer="adam", alpha=0.001, n_steps=TRAIN_T,
                         seed=9)
    t0 = time.time()
    result = train(config, train_set=street_set)
    print(f"[criterion 7 setup] training took {time.time() - t0:.0f}s")
    trained = evaluate_reconstruction(result.model, scene_set, n_steps=EVAL_T,
                                      tag="streetnums->scenes")
    gap = trained.mean_std("ssim")[0] - base.mean_std("ssim")[0]
    criterion(7, gap >= 0.2,
              f"OOD SSIM on 2000 foreign images: trained "
              f"{trained.mean_std('ssim')[0]:.4f} vs untrained "
              f"{base.mean_std('ssim')[0]:.4f}, gap {gap:.4f} (>= 0.2)")


def test_criterion_8_metrics_golden_suite():
    checks = []
    x = np.random.default_rng(8).random((3, 8, 8)) * 255
    checks.append(abs(metrics.ssim(x, x) - 1.0) <= 1e-9)
    checks.append(metrics.mse(x, x) == 0.0)
    zero = np.zeros((3, 4, 4))
    full = np.full((3, 4, 4), 255.0)
    checks.append(abs(metrics.psnr(zero, full) - 0.0) <= 1e-9)
    tenth = np.full((1, 10, 10), 25.5)
    checks.append(abs(metrics.psnr(np.zeros((1, 10, 10)), tenth) - 20.0)
                  <= 1e-9)
    rep = metrics.compare_images(zero[None], full[None])
    agg1 = metrics.aggregate([rep])
    checks.append(agg1.mse[1] == 0.0)
    reports = []
    for offset in (10.0, 20.0, 30.0):
        reports.append(metrics.compare_images(
            np.zeros((1, 3, 4, 4)), np.full((1, 3, 4, 4), offset)))
    agg = metrics.aggregate(reports)
    means = np.array([100.0, 400.0, 900.0])
    checks.append(abs(agg.mse[0] - means.mean()) <= 1e-9)
    checks.append(abs(agg.mse[1] - means.std()) <= 1e-9)
    criterion(8, all(checks),
              "ssim(x,x)=1, mse(x,x)=0, 0 dB / 20 dB analytic cases, "
              "aggregation mean/std hand cases all exact to 1e-9")


def test_criterion_9_cli_determinism(tmp_path):
    images = synthgen.street_number_corpus(60, seed=5)
    data_path = tmp_path / "train.ngct"
    C.save_tensor_file(str(data_path), images)
    outs = [tmp_path / "runA", tmp_path / "runB"]
    for out in outs:
        cmd = [sys.executable, "-m", "convngc.cli", "--threads", "1",
               "train", "--data", str(data_path), "--out", str(out),
               "--epochs", "2", "--batch-size", "30", "--T", "4",
               "--seed", "123"]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
    ck = [open(out / "checkpoint.ngc", "rb").read() for out in outs]
    logs = []
    for out in outs:
        # the log's wall_ms column is wall-clock by design; strip it
        logs.append([line.rsplit(",", 1)[0] for line in
                     open(out / "train.log")])
    cfgs = [open(out / "effective_config.kv").read() for out in outs]
    cfgs = [c.replace(str(outs[i]), "OUT") for i, c in enumerate(cfgs)]
    ok = ck[0] == ck[1] and logs[0] == logs[1] and cfgs[0] == cfgs[1]
    criterion(9, ok, f"two single-threaded cmd_train runs, seed 123: "
              f"checkpoints byte-identical ({len(ck[0])} bytes), logs "
              f"identical with the wall-clock column excluded "
              f"({len(logs[0])} lines)")
