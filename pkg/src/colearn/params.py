"""Flat parameter vectors, the softmax MLP family, and SGD arithmetic.

A model's parameters live in one contiguous float64 vector. Layer ``l`` maps
``layer_widths[l] -> layer_widths[l + 1]`` and stores its weight matrix
(row-major, ``fan_in x fan_out``) followed by its bias vector. Hidden layers use
the spec's activation; the output layer is always a softmax over class logits.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import CheckpointError, DegenerateReferenceError, InvalidInputError

KINDS = ("logistic-regression", "mlp")
ACTIVATIONS = ("relu", "tanh")

CHECKPOINT_MAGIC = b"CLRN"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sHQ")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    layer_widths: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown model kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")
        if len(self.layer_widths) < 2 or min(self.layer_widths) < 1:
            raise InvalidInputError(f"bad layer widths {self.layer_widths}")
        if self.kind == "logistic-regression" and len(self.layer_widths) != 2:
            raise InvalidInputError("logistic regression has exactly one layer")

    @classmethod
    def logistic(cls, input_dim: int, classes: int) -> "ModelSpec":
        return cls("logistic-regression", (input_dim, classes))

    @classmethod
    def mlp(cls, input_dim: int, hidden: Sequence[int], classes: int,
            activation: str = "relu") -> "ModelSpec":
        return cls("mlp", (input_dim, *hidden, classes), activation)

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def classes(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def param_count(self) -> int:
        w = self.layer_widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))

    @cached_property
    def slices(self) -> tuple[tuple[slice, slice, int, int], ...]:
        return tuple(self.layer_slices())

    def layer_slices(self) -> Iterator[tuple[slice, slice, int, int]]:
        """Yield (weight slice, bias slice, fan_in, fan_out) per layer."""
        offset = 0
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            w = slice(offset, offset + fan_in * fan_out)
            offset = w.stop
            b = slice(offset, offset + fan_out)
            offset = b.stop
            yield w, b, fan_in, fan_out


@dataclass(frozen=True)
class Batch:
    """Features (rows = samples) with integer class labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise InvalidInputError(f"features must be 2-D, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise InvalidInputError(
                f"{y.shape[0] if y.ndim == 1 else y.shape} labels for {x.shape[0]} rows")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidInputError("labels must be integers")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y.astype(np.int64))

    def __len__(self) -> int:
        return self.features.shape[0]


def as_params(spec: ModelSpec, params) -> np.ndarray:
    p = np.asarray(params, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != spec.param_count:
        raise InvalidInputError(
            f"expected {spec.param_count} parameters, got shape {p.shape}")
    return p


def _check_features(spec: ModelSpec, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise InvalidInputError(
            f"features of shape {x.shape} do not match input width {spec.input_dim}")
    return x


def _check_batch(spec: ModelSpec, data: Batch) -> None:
    if len(data) == 0:
        raise InvalidInputError("empty batch")
    if data.features.shape[1] != spec.input_dim:
        raise InvalidInputError(
            f"feature width {data.features.shape[1]} != input width {spec.input_dim}")
    if data.labels.min() < 0 or data.labels.max() >= spec.classes:
        raise InvalidInputError(f"labels outside [0, {spec.classes})")


def unpack(spec: ModelSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of (W, b) per layer; W has shape (fan_in, fan_out)."""
    return [(params[w].reshape(fi, fo), params[b]) for w, b, fi, fo in spec.slices]


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, from a seeded generator."""
    rng = np.random.default_rng(seed)
    out = np.zeros(spec.param_count)
    for w, _b, fan_in, fan_out in spec.layer_slices():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        out[w] = rng.uniform(-limit, limit, size=fan_in * fan_out)
    return out


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _activate_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    return 1.0 - a * a


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward_cache(spec: ModelSpec, params: np.ndarray, x: np.ndarray):
    acts = [x]
    pre = []
    layers = unpack(spec, params)
    a = x
    for i, (W, b) in enumerate(layers):
        z = a @ W + b
        pre.append(z)
        a = z if i == len(layers) - 1 else _activate(spec.activation, z)
        acts.append(a)
    return layers, pre, acts


def logits(spec: ModelSpec, params, features) -> np.ndarray:
    p = as_params(spec, params)
    x = _check_features(spec, features)
    return _forward_cache(spec, p, x)[2][-1]


def forward(spec: ModelSpec, params, features) -> np.ndarray:
    """Class probabilities f(w, x), one row per input row."""
    return softmax(logits(spec, params, features))


def empirical_loss(spec: ModelSpec, params, data: Batch) -> float:
    """Mean cross-entropy over the batch."""
    p = as_params(spec, params)
    _check_batch(spec, data)
    z = _forward_cache(spec, p, data.features)[2][-1]
    lp = log_softmax(z)
    return float(-lp[np.arange(len(data)), data.labels].mean())


def loss_and_gradient(spec: ModelSpec, params, data: Batch) -> tuple[float, np.ndarray]:
    p = as_params(spec, params)
    _check_batch(spec, data)
    return _loss_and_gradient(spec, p, data.features, data.labels)


def _loss_and_gradient(spec: ModelSpec, p: np.ndarray, x: np.ndarray,
                       y: np.ndarray) -> tuple[float, np.ndarray]:
    # unchecked hot path for the training loop
    n = x.shape[0]
    layers, pre, acts = _forward_cache(spec, p, x)
    lp = log_softmax(acts[-1])
    rows = np.arange(n)
    loss = float(-lp[rows, y].mean())

    delta = np.exp(lp)
    delta[rows, y] -= 1.0
    delta /= n

    grad = np.empty_like(p)
    slices = spec.slices
    for l in range(len(layers) - 1, -1, -1):
        W, _ = layers[l]
        w_sl, b_sl, _, _ = slices[l]
        grad[w_sl] = (acts[l].T @ delta).ravel()
        grad[b_sl] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ W.T) * _activate_grad(spec.activation, pre[l - 1], acts[l])
    return loss, grad


def gradient(spec: ModelSpec, params, data: Batch) -> np.ndarray:
    """Backpropagated gradient of :func:`empirical_loss` w.r.t. the flat parameters."""
    return loss_and_gradient(spec, params, data)[1]


def sgd_step(params, grad, lr: float) -> np.ndarray:
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 1:
        raise InvalidInputError(f"shape mismatch: params {p.shape}, grad {g.shape}")
    out = p - lr * g
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("SGD step produced non-finite parameters")
    return out


def average(models: Sequence[np.ndarray]) -> np.ndarray:
    """Unweighted elementwise mean, summed in list order for bitwise determinism."""
    if len(models) == 0:
        raise InvalidInputError("cannot average an empty list")
    first = np.asarray(models[0], dtype=np.float64)
    total = np.zeros_like(first)
    for m in models:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != first.shape:
            raise InvalidInputError(f"length mismatch: {m.shape} vs {first.shape}")
        total += m
    return total / len(models)


def rel_change(w_new, w_old, norm: str = "l2") -> float:
    """``|w_new - w_old| / |w_old|`` under the L2 (default) or Linf norm."""
    a = np.asarray(w_new, dtype=np.float64)
    b = np.asarray(w_old, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"length mismatch: {a.shape} vs {b.shape}")
    if norm == "l2":
        ord_ = None
    elif norm == "linf":
        ord_ = np.inf
    else:
        raise InvalidInputError(f"unknown norm {norm!r}")
    ref = np.linalg.norm(b, ord_)
    if ref == 0:
        raise DegenerateReferenceError("reference vector has zero norm")
    return float(np.linalg.norm(a - b, ord_) / ref)


def params_hash(params) -> str:
    return hashlib.sha256(np.ascontiguousarray(params, dtype="<f8").tobytes()).hexdigest()[:16]


def checkpoint_bytes(params) -> bytes:
    p = np.ascontiguousarray(params, dtype="<f8")
    if p.ndim != 1:
        raise InvalidInputError("checkpoint expects a flat parameter vector")
    return _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, p.shape[0]) + p.tobytes()


def params_from_checkpoint_bytes(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise CheckpointError("truncated header")
    magic, version, count = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported version {version}")
    body = blob[_HEADER.size:]
    if len(body) != 8 * count:
        raise CheckpointError(f"expected {count} values, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").astype(np.float64)


def save_checkpoint(path, params) -> None:
    Path(path).write_bytes(checkpoint_bytes(params))


def load_checkpoint(path) -> np.ndarray:
    return params_from_checkpoint_bytes(Path(path).read_bytes())
