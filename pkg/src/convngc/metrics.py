"""Image-quality metrics on the 0..255 scale.

MSE, SSIM and PSNR exactly as the evaluation protocol defines them, plus
per-trial aggregation. One deliberate departure from common library
behaviour: SSIM here is the *global-moment* formula -- image-wide means,
variances and covariance per channel, averaged over channels -- not the
windowed Gaussian variant, so values are NOT comparable with e.g.
``skimage.metrics.structural_similarity``. Variance and covariance use the
biased 1/N estimator.

Inputs are single images shaped (C, H, W) already rescaled to 0..255.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.ndim != 3:
        raise ValueError(f"expected (C,H,W) images, got shape {x.shape}")
    return x, y


def mse(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Mean over channels of the per-channel mean squared pixel difference."""
    x, x_hat = _check_pair(x, x_hat)
    per_channel = np.mean((x_hat - x) ** 2, axis=(1, 2))
    return float(np.mean(per_channel))


def ssim(x: np.ndarray, x_hat: np.ndarray, value_range: float = 255.0) -> float:
    """Global structural similarity, per channel then channel-averaged.

    Uses image-wide moments with the stabilizers (0.01*Q)^2 and (0.03*Q)^2.
    """
    x, x_hat = _check_pair(x, x_hat)
    c1 = (0.01 * value_range) ** 2
    c2 = (0.03 * value_range) ** 2
    vals = []
    for c in range(x.shape[0]):
        a, b = x[c], x_hat[c]
        mu_a, mu_b = a.mean(), b.mean()
        var_a, var_b = a.var(), b.var()
        cov = ((a - mu_a) * (b - mu_b)).mean()
        vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                    / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(vals))


def psnr(x: np.ndarray, x_hat: np.ndarray, peak: float = 255.0) -> float:
    """Per-channel 20*log10(peak/rmse), averaged over channels.

    Identical images produce ``inf``; aggregation excludes such sentinels
    and reports how many finite values remained.
    """
    x, x_hat = _check_pair(x, x_hat)
    vals = []
    for c in range(x.shape[0]):
        m = np.mean((x_hat[c] - x[c]) ** 2)
        vals.append(math.inf if m == 0 else 20.0 * math.log10(peak / math.sqrt(m)))
    if any(math.isinf(v) for v in vals):
        return math.inf
    return float(np.mean(vals))


@dataclass
class MetricsReport:
    """Per-image metric values with aggregate mean and population std."""

    mse_values: np.ndarray
    ssim_values: np.ndarray
    psnr_values: np.ndarray
    tag: str = ""

    @property
    def count(self) -> int:
        return len(self.mse_values)

    @property
    def psnr_finite_count(self) -> int:
        return int(np.sum(np.isfinite(self.psnr_values)))

    def mean_std(self, name: str) -> tuple:
        values = {"mse": self.mse_values, "ssim": self.ssim_values,
                  "psnr": self.psnr_values}[name]
        if name == "psnr":
            values = values[np.isfinite(values)]
        if len(values) == 0:
            return math.nan, math.nan
        return float(np.mean(values)), float(np.std(values))

    def summary(self) -> dict:
        out = {"count": self.count, "psnr_finite": self.psnr_finite_count,
               "tag": self.tag}
        for name in ("mse", "ssim", "psnr"):
            m, s = self.mean_std(name)
            out[f"{name}_mean"] = m
            out[f"{name}_std"] = s
        return out


def compare_images(reference: np.ndarray, output: np.ndarray,
                   tag: str = "") -> MetricsReport:
    """Score a batch of reconstructions against references (both (N,C,H,W),
    already on the 0..255 scale)."""
    if reference.shape != output.shape:
        raise ValueError(
            f"batch shapes differ: {reference.shape} vs {output.shape}")
    ms, ss, ps = [], [], []
    for i in range(len(reference)):
        ms.append(mse(reference[i], output[i]))
        ss.append(ssim(reference[i], output[i]))
        ps.append(psnr(reference[i], output[i]))
    return MetricsReport(np.asarray(ms), np.asarray(ss), np.asarray(ps), tag=tag)


@dataclass
class TrialAggregate:
    """Mean and population std of per-trial metric means."""

    n_trials: int
    mse: tuple
    ssim: tuple
    psnr: tuple


def aggregate(reports) -> TrialAggregate:
    """Aggregate several trials: mean +- population std over trial means."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    out = {}
    for name in ("mse", "ssim", "psnr"):
        means = np.array([r.mean_std(name)[0] for r in reports])
        out[name] = (float(np.mean(means)), float(np.std(means)))
    return TrialAggregate(n_trials=len(reports), **out)


# --- serialization -----------------------------------------------------------

def report_text(report: MetricsReport) -> str:
    """Human-readable per-image table plus the aggregate block."""
    lines = [f"# images: {report.count}   tag: {report.tag or '-'}",
             "# idx  mse  ssim  psnr"]
    for i in range(report.count):
        lines.append(f"{i}  {report.mse_values[i]:.6f}  "
                     f"{report.ssim_values[i]:.6f}  {report.psnr_values[i]:.6f}")
    s = report.summary()
    lines.append("")
    for name in ("mse", "ssim", "psnr"):
        lines.append(f"{name}: mean {s[f'{name}_mean']:.6f} "
                     f"std {s[f'{name}_std']:.6f}")
    lines.append(f"psnr finite: {s['psnr_finite']} of {s['count']}")
    return "\n".join(lines) + "\n"


def report_kv(report: MetricsReport) -> str:
    """Machine-readable key=value block (documented schema)."""
    s = report.summary()
    keys = ("count", "psnr_finite", "mse_mean", "mse_std", "ssim_mean",
            "ssim_std", "psnr_mean", "psnr_std")
    lines = [f"{k}={s[k]!r}" if isinstance(s[k], str) else f"{k}={s[k]:.9g}"
             for k in keys]
    lines.append(f"tag={s['tag']}")
    return "\n".join(lines) + "\n"


def parse_kv(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out
