"""Optimizers for the local synaptic updates.

Both optimizers consume *descent directions* (the updates module already
orients them so that adding decreases the local error energy):

* ``norm_sgd`` adds ``alpha * d / (||d|| + eps)`` with the norm taken per
  2-D kernel (per bias map for bias parameters).
* ``adam`` is the standard bias-corrected first/second-moment step applied
  to the gradient ``-d``.

Optimizer slot state serializes into checkpoints; see ``state_arrays``.
"""

from __future__ import annotations

import numpy as np

OPTIMIZER_IDS = {"none": 0, "norm_sgd": 1, "adam": 2}


class NormSgd:
    """Kernel-normalized gradient step: W += alpha * dW / (||dW||_2 + eps)."""

    name = "norm_sgd"

    def __init__(self, alpha: float = 0.001, eps: float = 1e-6):
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.t = 0

    def step(self, params: list, deltas: list) -> None:
        self.t += 1
        for p, d in zip(params, deltas):
            if d.ndim == 4:                      # kernel stack: per-kernel norm
                norm = np.sqrt(np.sum(d * d, axis=(2, 3), keepdims=True))
            else:                                # bias maps: per-map norm
                norm = np.sqrt(np.sum(d * d, axis=(-2, -1), keepdims=True))
            denom = norm + self.eps
            step = np.divide(self.alpha * d, denom, where=denom > 0,
                             out=np.zeros_like(d))
            p += step.astype(p.dtype, copy=False)

    def state_arrays(self) -> list:
        return []

    def load_state(self, arrays: list, step_count: int) -> None:
        del arrays
        self.t = int(step_count)

    @property
    def step_count(self) -> int:
        return self.t


class Adam:
    """Adaptive moment estimation over the negative update direction."""

    name = "adam"

    def __init__(self, shapes, dtype, alpha: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.alpha = float(alpha)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros(s, dtype=dtype) for s in shapes]
        self.v = [np.zeros(s, dtype=dtype) for s in shapes]

    def step(self, params: list, deltas: list) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, (p, d) in enumerate(zip(params, deltas)):
            g = -d
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p -= (self.alpha * m_hat / (np.sqrt(v_hat) + self.eps)).astype(
                p.dtype, copy=False)

    def state_arrays(self) -> list:
        return list(self.m) + list(self.v)

    def load_state(self, arrays: list, step_count: int) -> None:
        n = len(self.m)
        if len(arrays) != 2 * n:
            raise ValueError(f"adam state wants {2 * n} arrays, got {len(arrays)}")
        for i in range(n):
            self.m[i][...] = arrays[i]
            self.v[i][...] = arrays[n + i]
        self.t = int(step_count)

    @property
    def step_count(self) -> int:
        return self.t


def make_optimizer(name: str, model, alpha: float = 0.001, **kwargs):
    """Build an optimizer bound to ``model``'s parameter list order."""
    if name == "norm_sgd":
        return NormSgd(alpha=alpha, **kwargs)
    if name == "adam":
        shapes = [arr.shape for _, arr in model.param_items()]
        return Adam(shapes, model.dtype, alpha=alpha, **kwargs)
    raise ValueError(f"unknown optimizer id: {name!r}")
