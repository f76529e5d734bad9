"""From-scratch linear and ReLU-MLP classifiers trained by vanilla SGD.

Networks are lists of dense layers with ReLU hidden activations and a single
sigmoid output neuron (identity output for the square-loss linear regressor).
Training is plain SGD, no momentum or regularization of any kind; minibatches
come from a seeded reshuffle each epoch, so a run is fully determined by
(initial parameters, dataset, config).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "Layer",
    "ModelParams",
    "TrainConfig",
    "Checkpoint",
    "TrainingDivergedError",
    "xavier_init",
    "forward",
    "predict",
    "accuracy",
    "loss_and_grad",
    "sgd_train",
    "train_collect",
    "log_schedule",
    "geometric_schedule",
    "save_params",
    "load_params",
]

ACTIVATIONS = ("relu", "sigmoid", "identity")


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes NaN or infinite."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at SGD step {step}")
        self.step = step
        self.loss = loss


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray | None  # (out,) or None for bias-free layers
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class ModelParams:
    """Weights and biases of a dense network, output layer last."""

    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise ValueError("adjacent layer dimensions do not compose")
        for layer in self.layers:
            if not np.isfinite(layer.weights).all():
                raise ValueError("non-finite weights")
            if layer.bias is not None and not np.isfinite(layer.bias).all():
                raise ValueError("non-finite bias")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_activation(self) -> str:
        return self.layers[-1].activation

    @property
    def depth(self) -> int:
        """Number of hidden layers (0 for a linear model)."""
        return len(self.layers) - 1

    def n_params(self) -> int:
        return sum(
            l.weights.size + (0 if l.bias is None else l.bias.size)
            for l in self.layers
        )

    def copy(self) -> "ModelParams":
        return ModelParams(
            [
                Layer(l.weights.copy(), None if l.bias is None else l.bias.copy(), l.activation)
                for l in self.layers
            ]
        )


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one SGD run; checkpoint_schedule is step indices."""

    steps: int
    batch_size: int = 32
    learning_rate: float = 0.01
    loss: str = "bce"
    checkpoint_schedule: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.loss not in ("bce", "square"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.checkpoint_schedule is not None:
            sched = tuple(self.checkpoint_schedule)
            if list(sched) != sorted(set(sched)):
                raise ValueError("checkpoint_schedule must be strictly increasing")
            if sched and (sched[0] < 0 or sched[-1] > self.steps):
                raise ValueError("checkpoint_schedule outside [0, steps]")
            object.__setattr__(self, "checkpoint_schedule", sched)

    def schedule(self) -> tuple[int, ...]:
        if self.checkpoint_schedule is not None:
            return self.checkpoint_schedule
        return log_schedule(self.steps)


@dataclass(frozen=True)
class Checkpoint:
    step: int
    params: ModelParams


def log_schedule(steps: int) -> tuple[int, ...]:
    """Roughly log-spaced checkpoint steps 0, 1, 2, 3, 5, 8, 13, ... , steps."""
    points = {0, steps}
    a, b = 1, 2
    while a <= steps:
        points.add(a)
        a, b = b, a + b
    return tuple(sorted(points))


def geometric_schedule(steps: int, ratio: float = 1.15) -> tuple[int, ...]:
    """Denser log-spaced schedule for runs where a crossing step must be
    caught tightly; consecutive checkpoints differ by at most the ratio."""
    if ratio <= 1.0:
        raise ValueError("ratio must exceed 1")
    points = {0, steps}
    value = 1.0
    while value <= steps:
        points.add(int(round(value)))
        value *= ratio
    return tuple(sorted(p for p in points if p <= steps))


def xavier_init(
    layer_sizes: Sequence[int],
    seed: int = 0,
    output_activation: str = "sigmoid",
    bias: bool = True,
) -> ModelParams:
    """Uniform Xavier initialization: W ~ U[-a, a], a = sqrt(6/(fan_in+fan_out)).

    layer_sizes is [input_dim, hidden..., output_dim]; hidden layers get ReLU.
    Biases start at zero. Deterministic in seed.
    """
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if output_activation not in ("sigmoid", "identity"):
        raise ValueError("output activation must be sigmoid or identity")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = np.zeros(fan_out) if bias else None
        act = output_activation if i == len(layer_sizes) - 2 else "relu"
        layers.append(Layer(w, b, act))
    return ModelParams(layers)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_pass(params: ModelParams, x: np.ndarray):
    """Returns (list of pre-activations, list of activations incl. input)."""
    acts = [x]
    zs = []
    for layer in params.layers:
        z = acts[-1] @ layer.weights.T
        if layer.bias is not None:
            z = z + layer.bias
        zs.append(z)
        if layer.activation == "relu":
            acts.append(np.maximum(z, 0.0))
        elif layer.activation == "sigmoid":
            acts.append(_sigmoid(z))
        else:
            acts.append(z)
    return zs, acts


def forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Model output for a batch: sigmoid probability in (0,1) or raw value.

    x has shape (batch, input_dim); returns shape (batch,).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise ValueError(
            f"input dim {x.shape[1]} != model input dim {params.input_dim}"
        )
    _, acts = _forward_pass(params, x)
    out = acts[-1]
    if out.shape[1] != 1:
        raise ValueError("classifier output layer must have width 1")
    return out[:, 0]


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Hard {0,1} labels: output >= 0.5 for sigmoid, >= 0 for identity."""
    threshold = 0.5 if params.output_activation == "sigmoid" else 0.0
    return (forward(params, x) >= threshold).astype(np.uint8)


def accuracy(params: ModelParams, x: np.ndarray, labels: np.ndarray) -> float:
    return float((predict(params, x) == np.asarray(labels)).mean())


def loss_and_grad(params: ModelParams, x: np.ndarray, y: np.ndarray, loss: str):
    """Mean loss over the batch and its exact gradient, in params shape.

    bce: labels in {0,1}, sigmoid output; the loss is computed from logits in
    log-sum-exp form so saturated outputs stay finite. square: labels in
    {-1,+1}, identity output, mean of (1 - y*z)^2; only a linear model (no
    hidden layers) may use it.

    Returns (loss_value, [(dW, db_or_None), ...]).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    batch = x.shape[0]
    if y.shape != (batch,):
        raise ValueError("labels must match batch size")

    zs, acts = _forward_pass(params, x)
    z_out = zs[-1][:, 0]

    if loss == "bce":
        if params.output_activation != "sigmoid":
            raise ValueError("bce requires a sigmoid output layer")
        if np.any((y != 0) & (y != 1)):
            raise ValueError("bce labels must be 0/1")
        # mean(softplus(z) - y z), softplus via max(z,0) + log1p(exp(-|z|))
        value = float(
            np.mean(np.maximum(z_out, 0.0) - y * z_out + np.log1p(np.exp(-np.abs(z_out))))
        )
        delta = (_sigmoid(z_out) - y)[:, None] / batch
    elif loss == "square":
        if params.depth != 0 or params.output_activation != "identity":
            raise ValueError("square loss applies to a linear identity-output model")
        if np.any(np.abs(y) != 1):
            raise ValueError("square-loss labels must be -1/+1")
        margin = 1.0 - y * z_out
        value = float(np.mean(margin**2))
        delta = (-2.0 * y * margin)[:, None] / batch
    else:
        raise ValueError(f"unknown loss {loss!r}")

    grads = []
    for i in reversed(range(len(params.layers))):
        layer = params.layers[i]
        dw = delta.T @ acts[i]
        db = None if layer.bias is None else delta.sum(axis=0)
        grads.append((dw, db))
        if i > 0:
            delta = delta @ layer.weights
            delta = np.where(zs[i - 1] > 0.0, delta, 0.0)  # ReLU gate
    grads.reverse()
    return value, grads


def sgd_train(
    params: ModelParams, dataset, config: TrainConfig, start_step: int = 0
) -> Iterator[Checkpoint]:
    """Plain SGD, yielding a parameter snapshot at each scheduled step.

    Step t means "after t gradient updates"; step 0 is the initialization.
    Minibatches are consecutive slices of a fresh seeded permutation each
    epoch (the trailing partial batch is used). Aborts with
    TrainingDivergedError on a non-finite loss.

    Passing start_step > 0 resumes a run: params must be the snapshot taken at
    that step, and the shuffle stream is replayed so the continuation is
    bitwise identical to the uninterrupted run.
    """
    x = np.asarray(dataset.features, dtype=np.float64)
    labels = np.asarray(dataset.labels)
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    y = labels.astype(np.float64)
    if config.loss == "square":
        y = y * 2.0 - 1.0  # {0,1} -> {-1,+1}

    schedule = set(config.schedule())
    rng = np.random.default_rng(config.seed)
    params = params.copy()
    if start_step == 0 and 0 in schedule:
        yield Checkpoint(0, params.copy())

    n = x.shape[0]
    batches_per_epoch = -(-n // config.batch_size)
    for _ in range(start_step // batches_per_epoch):
        rng.permutation(n)  # replay consumed epochs when resuming

    step = start_step
    while step < config.steps:
        order = rng.permutation(n)
        offset = step % batches_per_epoch
        for start in range(offset * config.batch_size, n, config.batch_size):
            if step >= config.steps:
                break
            idx = order[start : start + config.batch_size]
            value, grads = loss_and_grad(params, x[idx], y[idx], config.loss)
            if not np.isfinite(value):
                raise TrainingDivergedError(step, value)
            for layer, (dw, db) in zip(params.layers, grads):
                layer.weights -= config.learning_rate * dw
                if db is not None:
                    layer.bias -= config.learning_rate * db
            step += 1
            if step in schedule:
                yield Checkpoint(step, params.copy())


def train_collect(params: ModelParams, dataset, config: TrainConfig) -> list[Checkpoint]:
    """Run sgd_train to completion and return the checkpoint list."""
    return list(sgd_train(params, dataset, config))


# --- checkpoint files ---------------------------------------------------------
#
# Versioned flat binary: magic "PPCK", u16 version, u16 layer count, then per
# layer u32 out, u32 in, u8 activation code, u8 has_bias; then per layer the
# weight matrix (row-major) and bias as little-endian float64.

_CKPT_MAGIC = b"PPCK"
_CKPT_VERSION = 1
_ACT_CODE = {"relu": 0, "sigmoid": 1, "identity": 2}
_CODE_ACT = {v: k for k, v in _ACT_CODE.items()}


def save_params(params: ModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<HH", _CKPT_VERSION, len(params.layers)))
        for layer in params.layers:
            out_dim, in_dim = layer.weights.shape
            fh.write(
                struct.pack(
                    "<IIBB",
                    out_dim,
                    in_dim,
                    _ACT_CODE[layer.activation],
                    0 if layer.bias is None else 1,
                )
            )
        for layer in params.layers:
            fh.write(layer.weights.astype("<f8").tobytes())
            if layer.bias is not None:
                fh.write(layer.bias.astype("<f8").tobytes())


def load_params(path) -> ModelParams:
    raw = Path(path).read_bytes()
    if raw[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, n_layers = struct.unpack("<HH", raw[4:8])
    if version != _CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 8
    headers = []
    for _ in range(n_layers):
        out_dim, in_dim, act, has_bias = struct.unpack("<IIBB", raw[offset : offset + 10])
        offset += 10
        headers.append((out_dim, in_dim, _CODE_ACT[act], has_bias))
    layers = []
    for out_dim, in_dim, act, has_bias in headers:
        w = np.frombuffer(raw, dtype="<f8", count=out_dim * in_dim, offset=offset)
        offset += 8 * out_dim * in_dim
        b = None
        if has_bias:
            b = np.frombuffer(raw, dtype="<f8", count=out_dim, offset=offset).copy()
            offset += 8 * out_dim
        layers.append(Layer(w.reshape(out_dim, in_dim).copy(), b, act))
    return ModelParams(layers)
