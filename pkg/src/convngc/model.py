"""Hierarchical convolutional generative-coding model.

A stack of latent feature-map layers, each predicting the layer below it
through a strided transposed convolution. Inference runs a fixed window of
predict/correct sweeps: every layer first emits a top-down prediction of the
layer beneath, error maps record the mismatch, and each latent map is then
nudged by the adjoint-routed bottom-up errors minus its own top-down error.
Learning is local: each kernel stack moves along the correlation of its
presynaptic activity with the error maps it failed to explain, the exact
negative energy gradient when the output nonlinearity is the identity.

Layer indexing is bottom-up: layer 0 is the image layer, layer ``top`` the
deepest latent block. ``W[l]`` (for ``l`` in 1..top) holds the kernels that
layer ``l`` uses to predict layer ``l - 1`` and has shape
``(C_l, C_{l-1}, kh, kw)``. Error maps exist for layers 0..top-1 only; the
top layer has no prediction of itself and therefore no error units.

Feedback routing: with tied error filters (the default), the bottom-up
message into layer ``l`` is the exact adjoint of its prediction operator,
i.e. a strided convolution of the error maps below with the *same* kernels,
channel roles swapped. Untied filters are stored separately with shape
``(C_{l-1}, C_l, kh, kw)`` and evolve at their own rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ops import (
    ShapeError,
    conv2d_batch,
    corr_kernel_grad,
    deconv2d_batch,
    leaky_relu,
)

ACTIVATION_IDS = {"identity": 0, "leaky_relu": 1}
_ID_TO_ACTIVATION = {v: k for k, v in ACTIVATION_IDS.items()}


def resolve_activation(name: str, slope: float):
    if name == "identity":
        return lambda v: v
    if name == "leaky_relu":
        return lambda v: leaky_relu(v, slope)
    raise ValueError(f"unknown activation id: {name!r}")


@dataclass(frozen=True)
class LayerSpec:
    """One latent block: channel count, map extents and its downward link.

    ``kernel``/``stride`` describe the transposed convolution this layer uses
    to predict the layer below; they are ignored on layer 0, which predicts
    nothing.
    """

    channels: int
    map_h: int
    map_w: int
    kernel: int = 3
    stride: int = 2
    phi: str = "leaky_relu"
    g: str = "identity"


@dataclass
class ModelConfig:
    """Architecture plus inference hyperparameters.

    layers: bottom-up list of LayerSpec (layers[0] is the image layer).
    beta: state correction rate per sweep.
    gamma: leak strength applied to every corrected state.
    n_steps: stimulus window length (sweeps per presented input).
    mu_z, sigma_z: Gaussian used to seed the top latent maps.
    leaky_slope: negative slope shared by all leaky-rectifier activations.
    error_filter_rate: update-rate multiplier for untied error filters.
    tied_errors: reuse the generative kernels as the feedback path.
    use_bias: learn per-channel bias maps (off by default; the stock
        architecture counts kernels only).
    weight_sigma: std-dev of the zero-mean Gaussian kernel init.
    dtype: np.float32 for training speed; tests use np.float64.
    """

    layers: list[LayerSpec]
    beta: float = 0.1
    gamma: float = 0.001
    n_steps: int = 60
    mu_z: float = 0.5
    sigma_z: float = 0.05
    leaky_slope: float = 0.3
    error_filter_rate: float = 0.9
    tied_errors: bool = True
    use_bias: bool = False
    weight_sigma: float = 0.1
    dtype: str = "float32"

    def __post_init__(self):
        if len(self.layers) < 2:
            raise ValueError("need at least two layers (image + one latent)")
        if self.n_steps < 1:
            raise ValueError(f"stimulus window must be >= 1, got {self.n_steps}")
        if self.beta < 0:
            raise ValueError("state correction rate must be non-negative")
        for l in range(1, len(self.layers)):
            lo, hi = self.layers[l - 1], self.layers[l]
            if (lo.map_h, lo.map_w) != (hi.map_h * hi.stride, hi.map_w * hi.stride):
                raise ShapeError(
                    f"layer {l - 1} maps {lo.map_h}x{lo.map_w} are not "
                    f"{hi.stride}x the {hi.map_h}x{hi.map_w} maps of layer {l}")

    @property
    def top(self) -> int:
        return len(self.layers) - 1


def default_config(channels_top_down=(10, 15, 20, 25, 3), top_hw=2,
                   kernel=3, stride=2, **overrides) -> ModelConfig:
    """The stock five-layer architecture: 2x2 top maps doubling to 32x32.

    ``channels_top_down`` is given deepest-first with the image channel count
    last, mirroring how the architecture is usually quoted.
    """
    n = len(channels_top_down)
    layers = []
    for depth, ch in enumerate(channels_top_down):   # depth 0 = top
        hw = top_hw * stride ** depth
        layers.append(LayerSpec(channels=ch, map_h=hw, map_w=hw,
                                kernel=kernel, stride=stride))
    layers.reverse()
    return ModelConfig(layers=layers, **overrides)


class ConvNgcModel:
    """Parameter container: kernel stacks, optional biases and error filters."""

    def __init__(self, config: ModelConfig):
        self.config = config
        cfg = config
        dt = np.dtype(cfg.dtype)
        self.W: list = [None] * (cfg.top + 1)
        self.b: list = [None] * (cfg.top + 1)
        self.E: list = [None] * (cfg.top + 1)
        for l in range(1, cfg.top + 1):
            hi, lo = cfg.layers[l], cfg.layers[l - 1]
            self.W[l] = np.zeros((hi.channels, lo.channels, hi.kernel, hi.kernel),
                                 dtype=dt)
            self.b[l] = np.zeros((lo.channels, lo.map_h, lo.map_w), dtype=dt)
            if not cfg.tied_errors:
                self.E[l] = np.zeros(
                    (lo.channels, hi.channels, hi.kernel, hi.kernel), dtype=dt)
        self._phi = [resolve_activation(s.phi, cfg.leaky_slope) for s in cfg.layers]
        self._g = [resolve_activation(s.g, cfg.leaky_slope) for s in cfg.layers]

    @property
    def top(self) -> int:
        return self.config.top

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def init_params(self, rng: np.random.Generator) -> "ConvNgcModel":
        """Gaussian kernel init, zero biases; untied filters start tied."""
        sigma = self.config.weight_sigma
        for l in range(1, self.top + 1):
            self.W[l][...] = rng.normal(0.0, sigma, size=self.W[l].shape)
            self.b[l][...] = 0.0
            if self.E[l] is not None:
                self.E[l][...] = self.W[l].transpose(1, 0, 2, 3)
        return self

    def error_filters(self, l: int) -> np.ndarray:
        """Feedback kernel stack for layer ``l``, shape (C_{l-1}, C_l, kh, kw).

        Tied mode derives it from the generative kernels by swapping the
        channel roles; the spatial taps are untouched, which is exactly what
        makes the feedback the adjoint of the prediction.
        """
        if self.config.tied_errors:
            return self.W[l].transpose(1, 0, 2, 3)
        return self.E[l]

    def phi(self, l: int, v: np.ndarray) -> np.ndarray:
        return self._phi[l](v)

    def g(self, l: int, v: np.ndarray) -> np.ndarray:
        return self._g[l](v)

    def param_items(self) -> list:
        """Learnable arrays in the fixed (documented) serialization order."""
        items = []
        for l in range(1, self.top + 1):
            items.append((f"W{l}", self.W[l]))
            if self.config.use_bias:
                items.append((f"b{l}", self.b[l]))
            if not self.config.tied_errors:
                items.append((f"E{l}", self.E[l]))
        return items

    def param_checksum(self) -> int:
        import zlib
        crc = 0
        for _, arr in self.param_items():
            crc = zlib.crc32(np.ascontiguousarray(arr).tobytes(), crc)
        return crc


def count_parameters(model: ConvNgcModel) -> int:
    """Number of independent learnable scalars."""
    return sum(arr.size for _, arr in model.param_items())


@dataclass
class InferenceState:
    """Per-batch latent maps, predictions and error maps.

    ``z`` has one array per layer (0..top); ``z_bar`` and ``e`` align with it
    but stay ``None`` at the top index since nothing predicts the top layer.
    ``e`` always reflects the most recent prediction sweep: corrections move
    ``z`` afterwards, matching the two-phase schedule.
    """

    z: list
    z_bar: list
    e: list
    clamped: list
    tod_trace: list = field(default_factory=list)

    @property
    def batch_size(self) -> int:
        return self.z[0].shape[0]

    def output_image(self) -> np.ndarray:
        """The model's current reconstruction: the prediction of layer 0."""
        return self.z_bar[0]


def ancestral_init(model: ConvNgcModel, batch_size: int,
                   rng: np.random.Generator) -> InferenceState:
    """Seed the top maps from N(mu_z, sigma_z) and project downward once.

    Every layer below the top starts exactly at its top-down prediction, so
    all error maps begin at zero.
    """
    cfg = model.config
    top = model.top
    dt = model.dtype
    z = [None] * (top + 1)
    z_bar = [None] * (top + 1)
    e = [None] * (top + 1)
    spec = cfg.layers[top]
    z[top] = rng.normal(cfg.mu_z, cfg.sigma_z,
                        size=(batch_size, spec.channels, spec.map_h,
                              spec.map_w)).astype(dt)
    for l in range(top, 0, -1):
        pred = deconv2d_batch(model.phi(l, z[l]), model.W[l],
                              cfg.layers[l].stride)
        pred = model.g(l - 1, pred + model.b[l])
        z_bar[l - 1] = pred
        z[l - 1] = pred.copy()
        e[l - 1] = np.zeros_like(pred)
    return InferenceState(z=z, z_bar=z_bar, e=e,
                          clamped=[False] * (top + 1))


def predict_layer(model: ConvNgcModel, state: InferenceState, l: int) -> None:
    """Refresh layer ``l``'s prediction of layer ``l - 1`` and its error maps."""
    if not 1 <= l <= model.top:
        raise ValueError(f"predict_layer needs 1 <= l <= {model.top}, got {l}")
    stride = model.config.layers[l].stride
    pred = deconv2d_batch(model.phi(l, state.z[l]), model.W[l], stride)
    pred = model.g(l - 1, pred + model.b[l])
    state.z_bar[l - 1] = pred
    state.e[l - 1] = state.z[l - 1] - pred


def predict_all(model: ConvNgcModel, state: InferenceState) -> None:
    for l in range(model.top, 0, -1):
        predict_layer(model, state, l)


def correct_states(model: ConvNgcModel, state: InferenceState) -> None:
    """One correction sweep over every unclamped layer.

    Layer ``l`` moves along ``-e[l]`` (top-down pressure, absent at the top)
    plus the adjoint-routed bottom-up errors (absent at layer 0), scaled by
    the correction rate, with a leak term shrinking the state.
    """
    cfg = model.config
    beta = np.asarray(cfg.beta, dtype=model.dtype)
    gamma = np.asarray(cfg.gamma, dtype=model.dtype)
    for l in range(model.top, -1, -1):
        if state.clamped[l]:
            continue
        if l == 0:
            d = -state.e[0]
        else:
            d = conv2d_batch(state.e[l - 1], model.error_filters(l),
                             cfg.layers[l].stride)
            if l < model.top:
                d = d - state.e[l]
        state.z[l] = state.z[l] + beta * d - gamma * state.z[l]


def total_discrepancy(state: InferenceState) -> float:
    """Summed squared prediction mismatch, 0.5 * sum ||z - z_bar||^2.

    Covers layers 0..top-1 over all channels, pixels and batch samples.
    """
    total = 0.0
    for l in range(len(state.z) - 1):
        diff = state.z[l].astype(np.float64) - state.z_bar[l].astype(np.float64)
        total += 0.5 * float(np.sum(diff * diff))
    return total


def run_inference(model: ConvNgcModel, x: np.ndarray, mode: str = "clamped",
                  n_steps: int | None = None,
                  rng: np.random.Generator | None = None,
                  state: InferenceState | None = None) -> InferenceState:
    """Run the T-step predict/correct window on a batch of images.

    mode "clamped" pins layer 0 to ``x`` for the whole window (training and
    reconstruction); "init_only" sets layer 0 to ``x`` once and then lets it
    evolve with every other state (denoising). Each step is one full
    prediction sweep followed by one full correction sweep; the trace of
    total discrepancy is recorded at the prediction point of every step, so
    ``tod_trace[0]`` is the energy at step 1 and ``tod_trace[-1]`` at step T.
    """
    if mode not in ("clamped", "init_only"):
        raise ValueError(f"unknown inference mode: {mode!r}")
    T = model.config.n_steps if n_steps is None else int(n_steps)
    if T < 1:
        raise ValueError(f"stimulus window must be >= 1, got {T}")
    x = np.asarray(x, dtype=model.dtype)
    spec = model.config.layers[0]
    want = (spec.channels, spec.map_h, spec.map_w)
    if x.ndim != 4 or x.shape[1:] != want:
        raise ShapeError(f"input batch shape {x.shape} does not match layer 0 "
                         f"maps {want}")
    if state is None:
        if rng is None:
            raise ValueError("run_inference needs an rng when no state is given")
        state = ancestral_init(model, x.shape[0], rng)
    state.z[0] = x.copy()
    state.clamped[0] = (mode == "clamped")
    for _ in range(T):
        predict_all(model, state)
        state.tod_trace.append(total_discrepancy(state))
        correct_states(model, state)
    return state


@dataclass
class ModelUpdates:
    """Per-layer synaptic displacement, already batch-averaged.

    ``dW[l]`` is the direction that *decreases* the squared error below layer
    ``l``; optimizers therefore add (a normalized form of) it.
    """

    dW: list
    dE: list
    db: list


def compute_updates(model: ConvNgcModel, state: InferenceState) -> ModelUpdates:
    """Local Hebbian-like kernel updates from the current state statistics.

    For each layer the update correlates the presynaptic activity map (the
    dilation is implicit in the strided correlation) with the error maps one
    level down, averaged over the batch. With untied filters the feedback
    stack receives the channel-swapped update scaled by the error-filter
    rate. Bias updates are the mean error maps.
    """
    cfg = model.config
    top = model.top
    dW = [None] * (top + 1)
    dE = [None] * (top + 1)
    db = [None] * (top + 1)
    for l in range(1, top + 1):
        spec = cfg.layers[l]
        pre = model.phi(l, state.z[l])
        dW[l] = corr_kernel_grad(pre, state.e[l - 1], spec.kernel, spec.kernel,
                                 spec.stride)
        if not cfg.tied_errors:
            dE[l] = cfg.error_filter_rate * dW[l].transpose(1, 0, 2, 3)
        if cfg.use_bias:
            db[l] = state.e[l - 1].mean(axis=0)
    return ModelUpdates(dW=dW, dE=dE, db=db)


def project_kernels(model: ConvNgcModel) -> None:
    """Re-project every kernel onto the unit Euclidean ball."""
    for stack in (model.W, model.E):
        for arr in stack[1:]:
            if arr is None:
                continue
            norms = np.sqrt(np.sum(arr.astype(np.float64) ** 2, axis=(2, 3),
                                   keepdims=True))
            scale = np.where(norms > 1.0, norms, 1.0).astype(arr.dtype)
            arr /= scale


def apply_updates(model: ConvNgcModel, updates: ModelUpdates, optimizer) -> None:
    """Take one optimizer step along the update direction, then re-project.

    The optimizer owns its slot state and must have been built for this
    model (see :mod:`convngc.optim`). Kernel norms never exceed one on exit.
    """
    names = [name for name, _ in model.param_items()]
    deltas = []
    for name in names:
        kind, l = name[0], int(name[1:])
        deltas.append({"W": updates.dW, "b": updates.db, "E": updates.dE}[kind][l])
    params = [arr for _, arr in model.param_items()]
    optimizer.step(params, deltas)
    project_kernels(model)
