"""Small trainable encoder with hand-rolled gradients.

At most three dense layers (tanh or identity activations) followed by an
output normalization: either projection onto the sphere of radius ``r`` or
per-dimension batch standardization (zero mean, unit mean square over the
current batch). Gradients are computed by manual backpropagation through
the whole stack, including the normalization, and training is plain
full-gradient descent on sampled view batches.

A certified Lipschitz upper bound is available for trained models: the
product of layer operator norms (tanh has slope at most 1) times a factor
for the output map. For sphere projection the factor is 2r / c with c the
smallest pre-projection norm attained on a probe set, valid between any
two points whose pre-projection norms reach c; for standardization with
frozen statistics it is the largest per-dimension inverse scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit

from . import losses as losses_mod
from .augment import AugmentationSet, sample_views
from .core import Dataset
from .losses import LossBreakdown

__all__ = [
    "Layer",
    "EncoderModel",
    "TrainConfig",
    "ViewBatch",
    "init_encoder",
    "forward",
    "forward_prenorm",
    "flat_params",
    "with_params",
    "make_train_batch",
    "loss_and_gradient",
    "train",
    "lipschitz_upper_bound",
    "operator_norm",
    "save_model",
    "load_model",
    "save_trace",
    "load_trace",
]

MAX_LAYERS = 3

_MODEL_MAGIC = b"CENC1"

NormMode = Literal["sphere", "batch_standardized", "none"]


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Literal["tanh", "identity"]

    def __post_init__(self) -> None:
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError("layer weight must be (out, in) with matching bias")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class EncoderModel:
    """Feed-forward encoder; treat instances as immutable."""

    layers: tuple[Layer, ...]
    norm_mode: NormMode = "sphere"
    radius: float = 1.0

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not 1 <= len(layers) <= MAX_LAYERS:
            raise ValueError(f"encoder must have between 1 and {MAX_LAYERS} layers")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError("layer dimensions do not chain")
        if self.norm_mode not in ("sphere", "batch_standardized", "none"):
            raise ValueError(f"unknown norm mode {self.norm_mode!r}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]


def init_encoder(
    input_dim: int,
    hidden_dims: tuple[int, ...],
    output_dim: int,
    norm_mode: NormMode = "sphere",
    radius: float = 1.0,
    seed: int = 0,
) -> EncoderModel:
    """Fresh encoder with 1/sqrt(fan_in) weights; hidden tanh, linear head."""
    dims = [int(input_dim), *[int(h) for h in hidden_dims], int(output_dim)]
    if len(dims) - 1 > MAX_LAYERS:
        raise ValueError(f"at most {MAX_LAYERS - 1} hidden layers supported")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
        weight = rng.standard_normal((d_out, d_in)) / np.sqrt(d_in)
        activation = "identity" if i == len(dims) - 2 else "tanh"
        layers.append(Layer(weight, np.zeros(d_out), activation))
    return EncoderModel(tuple(layers), norm_mode=norm_mode, radius=float(radius))


# ---------------------------------------------------------------------------
# Forward / parameters
# ---------------------------------------------------------------------------


def _forward_layers(model: EncoderModel, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    activations = [x]
    for layer in model.layers:
        pre = activations[-1] @ layer.weight.T + layer.bias
        activations.append(np.tanh(pre) if layer.activation == "tanh" else pre)
    return activations[-1], activations


def forward_prenorm(model: EncoderModel, x: np.ndarray) -> np.ndarray:
    """Network output before the normalization stage."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.input_dim:
        raise ValueError(f"input dim {x.shape[1]} does not match encoder ({model.input_dim})")
    return _forward_layers(model, x)[0]


def _norm_forward(model: EncoderModel, y: np.ndarray) -> tuple[np.ndarray, tuple]:
    if model.norm_mode == "sphere":
        norms = np.linalg.norm(y, axis=1, keepdims=True)
        if norms.min() < 1e-12:
            raise ValueError("zero vector cannot be projected onto the sphere")
        z = model.radius * y / norms
        return z, (y, norms)
    if model.norm_mode == "batch_standardized":
        if y.shape[0] < 2:
            raise ValueError("batch standardization needs at least 2 rows")
        mu = y.mean(axis=0)
        var = np.mean((y - mu) ** 2, axis=0)
        if var.min() < 1e-24:
            raise ValueError("batch standardization hit a zero-variance dimension")
        scale = np.sqrt(var)
        z = (y - mu) / scale
        return z, (z, scale)
    return y, ()


def forward(model: EncoderModel, x: np.ndarray) -> np.ndarray:
    """Embeddings for a batch (or single point, returned as (1, d)).

    Batch standardization uses the statistics of the batch it is given.
    """
    y = forward_prenorm(model, x)
    z, _ = _norm_forward(model, y)
    return z


def flat_params(model: EncoderModel) -> np.ndarray:
    return np.concatenate(
        [np.concatenate([layer.weight.ravel(), layer.bias]) for layer in model.layers]
    )


def with_params(model: EncoderModel, flat: np.ndarray) -> EncoderModel:
    flat = np.asarray(flat, dtype=np.float64)
    layers = []
    pos = 0
    for layer in model.layers:
        w_size = layer.weight.size
        b_size = layer.bias.size
        weight = flat[pos : pos + w_size].reshape(layer.weight.shape)
        bias = flat[pos + w_size : pos + w_size + b_size]
        layers.append(Layer(weight.copy(), bias.copy(), layer.activation))
        pos += w_size + b_size
    if pos != flat.size:
        raise ValueError("parameter vector size mismatch")
    return EncoderModel(tuple(layers), norm_mode=model.norm_mode, radius=model.radius)


# ---------------------------------------------------------------------------
# Training batches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ViewBatch:
    """Anchor/positive (and optionally negative) view batches."""

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray | None = None

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.anchors, dtype=np.float64))
        p = np.atleast_2d(np.asarray(self.positives, dtype=np.float64))
        if a.shape != p.shape or a.shape[0] == 0:
            raise ValueError("anchor and positive batches must share a non-empty shape")
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "positives", p)
        if self.negatives is not None:
            n = np.atleast_2d(np.asarray(self.negatives, dtype=np.float64))
            if n.shape != a.shape:
                raise ValueError("negative batch must match the anchor shape")
            object.__setattr__(self, "negatives", n)

    @property
    def size(self) -> int:
        return self.anchors.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    loss: losses_mod.LossKind = "info_nce"
    steps: int = 500
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    lam: float = 0.005

    def __post_init__(self) -> None:
        if self.loss not in ("info_nce", "cross_corr", "simple"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lam <= 0:
            raise ValueError("lam must be positive")


def make_train_batch(
    dataset: Dataset,
    aug: AugmentationSet,
    batch_size: int,
    rng: np.random.Generator,
    with_negatives: bool,
) -> ViewBatch:
    """Sample anchors uniformly, two views each, plus one view of an
    independent sample per anchor when negatives are requested."""
    idx = rng.integers(0, dataset.num_samples, size=batch_size)
    points = dataset.features[idx]
    anchors = sample_views(points, aug, rng)
    positives = sample_views(points, aug, rng)
    negatives = None
    if with_negatives:
        neg_idx = rng.integers(0, dataset.num_samples, size=batch_size)
        negatives = sample_views(dataset.features[neg_idx], aug, rng)
    return ViewBatch(anchors, positives, negatives)


# ---------------------------------------------------------------------------
# Loss + gradient
# ---------------------------------------------------------------------------


def _check_pairing(model: EncoderModel, config: TrainConfig) -> None:
    if config.loss in ("info_nce", "simple"):
        if model.norm_mode != "sphere" or abs(model.radius - 1.0) > 1e-9:
            raise ValueError(f"{config.loss} training requires sphere normalization with r=1")
    else:
        if model.norm_mode != "batch_standardized":
            raise ValueError("cross_corr training requires batch_standardized normalization")


def _norm_backward(model: EncoderModel, cache: tuple, dz: np.ndarray) -> np.ndarray:
    if model.norm_mode == "sphere":
        y, norms = cache
        yhat = y / norms
        inner = np.sum(dz * yhat, axis=1, keepdims=True)
        return (model.radius / norms) * (dz - yhat * inner)
    if model.norm_mode == "batch_standardized":
        z, scale = cache
        return (dz - dz.mean(axis=0) - z * np.mean(dz * z, axis=0)) / scale
    return dz


def _layers_backward(
    model: EncoderModel, activations: list[np.ndarray], d_out: np.ndarray
) -> np.ndarray:
    grads: list[np.ndarray] = []
    grad = d_out
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        post = activations[i + 1]
        d_pre = grad * (1.0 - post**2) if layer.activation == "tanh" else grad
        grads.append(np.concatenate([(d_pre.T @ activations[i]).ravel(), d_pre.sum(axis=0)]))
        grad = d_pre @ layer.weight
    return np.concatenate(grads[::-1])


def loss_and_gradient(
    model: EncoderModel, batch: ViewBatch, config: TrainConfig
) -> tuple[LossBreakdown, np.ndarray]:
    """Loss breakdown on the batch and the exact gradient in flat layout.

    The reported value is exactly what the corresponding loss function in
    :mod:`augbound.losses` computes on the batch embeddings.
    """
    _check_pairing(model, config)
    b = batch.size
    if config.loss in ("info_nce", "simple"):
        if batch.negatives is None:
            raise ValueError(f"{config.loss} needs a negative batch")
        stacked = np.concatenate([batch.anchors, batch.positives, batch.negatives])
        y, activations = _forward_layers(
            model, np.asarray(stacked, dtype=np.float64)
        )
        z, cache = _norm_forward(model, y)
        z1, z2, zn = z[:b], z[b : 2 * b], z[2 * b :]
        if config.loss == "info_nce":
            breakdown = losses_mod.info_nce(z1, z2, zn)
            pos = np.sum(z1 * z2, axis=1)
            neg = np.sum(z1 * zn, axis=1)
            p_neg = expit(neg - pos)[:, None]
            dz1 = p_neg * (zn - z2) / b
            dz2 = -p_neg * z1 / b
            dzn = p_neg * z1 / b
        else:
            breakdown = losses_mod.simple_contrastive(z1, z2, zn, config.lam)
            dz1 = (-z2 + config.lam * zn) / b
            dz2 = -z1 / b
            dzn = config.lam * z1 / b
        dz = np.concatenate([dz1, dz2, dzn])
    else:
        stacked = np.concatenate([batch.anchors, batch.positives])
        y, activations = _forward_layers(model, np.asarray(stacked, dtype=np.float64))
        z, cache = _norm_forward(model, y)
        z1, z2 = z[:b], z[b:]
        corr = losses_mod.cross_correlation(z1, z2)
        breakdown = losses_mod.cross_corr_loss(corr, config.lam)
        f = corr.matrix
        g = 2.0 * config.lam * f
        np.fill_diagonal(g, -2.0 * (1.0 - np.diag(f)))
        dz = np.concatenate([z2 @ g, z1 @ g]) / b
    d_pre_norm = _norm_backward(model, cache, dz)
    grad = _layers_backward(model, activations, d_pre_norm)
    return breakdown, grad


def _smoke_input_check(model: EncoderModel, dataset: Dataset) -> None:
    if dataset.input_dim != model.input_dim:
        raise ValueError(
            f"dataset dimension {dataset.input_dim} does not match encoder "
            f"input {model.input_dim}"
        )


def train(
    model: EncoderModel,
    dataset: Dataset,
    aug: AugmentationSet,
    config: TrainConfig,
) -> tuple[EncoderModel, np.ndarray]:
    """Plain gradient descent; returns the new model and a (steps, 4) trace.

    Trace columns are step, total, l1, l2, recorded at the parameters the
    step started from. Aborts with the step index if the loss, gradient,
    or updated parameters go non-finite (learning rate too high). Zero
    steps returns the model unchanged with an empty trace.
    """
    _check_pairing(model, config)
    _smoke_input_check(model, dataset)
    rng = np.random.default_rng(config.seed)
    params = flat_params(model)
    current = model
    with_negatives = config.loss in ("info_nce", "simple")
    trace = np.empty((config.steps, 4))
    for step in range(config.steps):
        batch = make_train_batch(dataset, aug, config.batch_size, rng, with_negatives)
        breakdown, grad = loss_and_gradient(current, batch, config)
        if not np.isfinite(breakdown.total) or not np.all(np.isfinite(grad)):
            raise RuntimeError(f"training diverged at step {step}")
        trace[step] = (step, breakdown.total, breakdown.l1, breakdown.l2)
        params = params - config.learning_rate * grad
        if not np.all(np.isfinite(params)):
            raise RuntimeError(f"training diverged at step {step}")
        current = with_params(current, params)
    return current, trace


# ---------------------------------------------------------------------------
# Lipschitz certificate
# ---------------------------------------------------------------------------


def operator_norm(matrix: np.ndarray, tol: float = 1e-8, max_iter: int = 10000) -> float:
    """Largest singular value by power iteration on W^T W.

    Deterministic start vector; stops when successive estimates agree to
    ``tol`` (relative for values above 1).
    """
    w = np.asarray(matrix, dtype=np.float64)
    if w.size == 0:
        return 0.0
    n = w.shape[1]
    v = 1.0 + 1e-3 * np.arange(n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = w.T @ (w @ v)
        norm_u = np.linalg.norm(u)
        if norm_u < 1e-300:
            return 0.0
        v = u / norm_u
        new_sigma = float(np.sqrt(norm_u))
        if abs(new_sigma - sigma) <= tol * max(1.0, new_sigma):
            return new_sigma
        sigma = new_sigma
    return sigma


def lipschitz_upper_bound(model: EncoderModel, probe_inputs: np.ndarray | None = None) -> float:
    """Certified Lipschitz constant of the embedding map.

    Product of layer operator norms (tanh slope at most 1), times a final
    factor depending on the norm mode: 2r / (smallest pre-projection norm
    over the probe set) for sphere projection, the largest inverse scale of
    the probe-set statistics for standardization, and 1 with no norm. The
    sphere certificate is valid between points whose pre-projection norms
    reach the probe minimum, so probe with the points the bound will be
    applied to.
    """
    product = 1.0
    for layer in model.layers:
        product *= operator_norm(layer.weight)
    if model.norm_mode == "none":
        return product
    if probe_inputs is None:
        raise ValueError(f"{model.norm_mode} norm mode needs probe inputs for the certificate")
    pre = forward_prenorm(model, probe_inputs)
    if model.norm_mode == "sphere":
        c = float(np.linalg.norm(pre, axis=1).min())
        if c < 1e-6:
            raise ValueError("pre-projection norms vanish on the probe set; factor unbounded")
        return product * 2.0 * model.radius / c
    mu = pre.mean(axis=0)
    var = np.mean((pre - mu) ** 2, axis=0)
    if var.min() < 1e-12:
        raise ValueError("probe-set variance vanishes in some dimension; factor unbounded")
    return product / float(np.sqrt(var.min()))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_model(model: EncoderModel, path: str, seed: int | None = None) -> None:
    import json
    import struct

    header = {
        "layer_dims": [list(layer.weight.shape) for layer in model.layers],
        "activations": [layer.activation for layer in model.layers],
        "norm_mode": model.norm_mode,
        "radius": model.radius,
        "seed": seed,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(flat_params(model).astype("<f8").tobytes())


def load_model(path: str) -> tuple[EncoderModel, int | None]:
    import json
    import struct

    with open(path, "rb") as fh:
        magic = fh.read(len(_MODEL_MAGIC))
        if magic != _MODEL_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        (blob_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(blob_len).decode())
        params = np.frombuffer(fh.read(), dtype="<f8")
    layers = []
    for (d_out, d_in), act in zip(header["layer_dims"], header["activations"]):
        layers.append(Layer(np.zeros((d_out, d_in)), np.zeros(d_out), act))
    skeleton = EncoderModel(
        tuple(layers), norm_mode=header["norm_mode"], radius=header["radius"]
    )
    return with_params(skeleton, params), header["seed"]


def save_trace(trace: np.ndarray, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("step,loss,l1,l2\n")
        for row in np.atleast_2d(trace):
            if row.size == 0:
                continue
            fh.write(
                f"{int(row[0])},{float(row[1])!r},{float(row[2])!r},{float(row[3])!r}\n"
            )


def load_trace(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "step,loss,l1,l2":
            raise ValueError(f"{path}: unexpected trace header {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}: malformed trace row {line!r}")
            rows.append([float(v) for v in parts])
    return np.asarray(rows, dtype=np.float64).reshape(-1, 4)
