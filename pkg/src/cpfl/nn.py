"""Dense ReLU classifier with hand-written backprop and two optimizers.

Everything runs in float64. Parameters are exposed as a flat list
``[W0, b0, W1, b1, ...]``; gradients and optimizer buffers use the same
layout so they can be zipped together.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

MAGIC = b"CPFLMDL1"


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        dims = self.layer_dims
        if len(dims) < 2 or any(int(d) < 1 for d in dims):
            raise InvalidInputError(f"layer_dims must hold >= 2 positive ints, got {dims}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise InvalidInputError("need one weight matrix and one bias vector per layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
                raise InvalidInputError(
                    f"layer {l}: expected W{(dims[l], dims[l + 1])} b({dims[l + 1]},), "
                    f"got W{w.shape} b{b.shape}"
                )

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def parameter_count(self) -> int:
        d = self.layer_dims
        return sum((d[l] + 1) * d[l + 1] for l in range(len(d) - 1))

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    @classmethod
    def from_params(cls, layer_dims: Sequence[int], params: Sequence[np.ndarray]) -> "MlpModel":
        params = list(params)
        return cls(list(layer_dims), params[0::2], params[1::2])


def init_model(layer_dims: Sequence[int], rng: np.random.Generator) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise InvalidInputError(f"layer_dims must hold >= 2 positive ints, got {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases)


def zeros_like_model(model: MlpModel) -> MlpModel:
    return MlpModel(
        list(model.layer_dims),
        [np.zeros_like(w) for w in model.weights],
        [np.zeros_like(b) for b in model.biases],
    )


def _check_batch(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != model.input_dim:
        raise InvalidInputError(
            f"batch must be [B>=1 x {model.input_dim}], got shape {x.shape}"
        )
    return x


def _forward_cached(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    # activations[l] is the input to layer l
    activations = [x]
    a = x
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if l < last:
            a = np.maximum(z, 0.0)
            activations.append(a)
        else:
            a = z
    return a, activations


def forward(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Logits for ``batch`` (shape B x input_dim)."""
    x = _check_batch(model, batch)
    logits, _ = _forward_cached(model, x)
    return logits


def _backprop(
    model: MlpModel, activations: list[np.ndarray], dz: np.ndarray
) -> list[np.ndarray]:
    grads: list[np.ndarray] = [None] * (2 * len(model.weights))  # type: ignore[list-item]
    for l in range(len(model.weights) - 1, -1, -1):
        a_in = activations[l]
        grads[2 * l] = a_in.T @ dz
        grads[2 * l + 1] = dz.sum(axis=0)
        if l > 0:
            dz = (dz @ model.weights[l].T) * (a_in > 0.0)
    return grads


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_labels(model: MlpModel, labels: np.ndarray, batch_size: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (batch_size,):
        raise InvalidInputError(f"expected {batch_size} labels, got shape {y.shape}")
    if batch_size and (y.min() < 0 or y.max() >= model.num_classes):
        raise InvalidInputError(f"labels must lie in [0, {model.num_classes})")
    return y.astype(np.int64, copy=False)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    logp = log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def backward_ce(
    model: MlpModel, batch: np.ndarray, labels: np.ndarray
) -> tuple[list[np.ndarray], float]:
    """Gradient and mean softmax cross-entropy over the batch."""
    x = _check_batch(model, batch)
    y = _check_labels(model, labels, x.shape[0])
    logits, activations = _forward_cached(model, x)
    logp = log_softmax(logits)
    rows = np.arange(x.shape[0])
    loss = float(-logp[rows, y].mean())
    dz = np.exp(logp)
    dz[rows, y] -= 1.0
    dz /= x.shape[0]
    return _backprop(model, activations, dz), loss


def backward_kd(
    model: MlpModel, batch: np.ndarray, target_logits: np.ndarray
) -> tuple[list[np.ndarray], float]:
    """Subgradient and mean L1 distance between student logits and targets.

    The subgradient uses sign(0) = 0.
    """
    x = _check_batch(model, batch)
    target = np.asarray(target_logits, dtype=np.float64)
    if target.shape != (x.shape[0], model.num_classes):
        raise InvalidInputError(
            f"target_logits must be {(x.shape[0], model.num_classes)}, got {target.shape}"
        )
    logits, activations = _forward_cached(model, x)
    residual = logits - target
    loss = float(np.abs(residual).sum(axis=1).mean())
    dz = np.sign(residual) / x.shape[0]
    return _backprop(model, activations, dz), loss


def _check_grads(params: list[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise InvalidInputError("gradient shapes do not match model parameters")


@dataclass
class OptimizerState:
    """Momentum or Adam buffers. ``step`` counts completed updates."""

    kind: str
    lr: float
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    buffers: list[list[np.ndarray]] = field(default_factory=list)

    @classmethod
    def sgd(cls, model: MlpModel, lr: float, momentum: float = 0.9) -> "OptimizerState":
        return cls("sgd", lr, momentum=momentum,
                   buffers=[[np.zeros_like(p) for p in model.params()]])

    @classmethod
    def adam(
        cls, model: MlpModel, lr: float = 0.001,
        beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
    ) -> "OptimizerState":
        zeros = lambda: [np.zeros_like(p) for p in model.params()]  # noqa: E731
        return cls("adam", lr, beta1=beta1, beta2=beta2, eps=eps, buffers=[zeros(), zeros()])


def sgd_step(
    model: MlpModel, state: OptimizerState, grads: Sequence[np.ndarray]
) -> tuple[MlpModel, OptimizerState]:
    """Classic momentum: v <- mu*v + g; theta <- theta - lr*v. Updates in place."""
    if state.kind != "sgd":
        raise InvalidInputError(f"sgd_step needs an sgd state, got {state.kind!r}")
    params = model.params()
    _check_grads(params, grads)
    (velocity,) = state.buffers
    _check_grads(params, velocity)
    for p, v, g in zip(params, velocity, grads):
        v *= state.momentum
        v += g
        p -= state.lr * v
    state.step += 1
    return model, state


def adam_step(
    model: MlpModel, state: OptimizerState, grads: Sequence[np.ndarray]
) -> tuple[MlpModel, OptimizerState]:
    """Adam with bias correction. Updates in place."""
    if state.kind != "adam":
        raise InvalidInputError(f"adam_step needs an adam state, got {state.kind!r}")
    params = model.params()
    _check_grads(params, grads)
    first, second = state.buffers
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, m, v, g in zip(params, first, second, grads):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model, state


def evaluate(model: MlpModel, dataset) -> tuple[float, float]:
    """Top-1 accuracy (ties go to the lowest class index) and mean cross-entropy.

    ``dataset`` is anything with ``features`` and ``labels`` arrays.
    """
    x = np.asarray(dataset.features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInputError("cannot evaluate on an empty dataset")
    logits = forward(model, x)
    y = _check_labels(model, dataset.labels, x.shape[0])
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    return accuracy, cross_entropy(logits, y)


def serialize(model: MlpModel) -> bytes:
    """Checkpoint bytes: magic, layer count, dims (u32 LE), then per layer W then b (f64 LE)."""
    dims = model.layer_dims
    header = MAGIC + struct.pack(f"<I{len(dims)}I", len(dims) - 1, *dims)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params())
    return header + body


def deserialize(blob: bytes) -> MlpModel:
    if blob[:8] != MAGIC:
        raise InvalidInputError("not a model checkpoint (bad magic)")
    try:
        (layers,) = struct.unpack_from("<I", blob, 8)
        dims = list(struct.unpack_from(f"<{layers + 1}I", blob, 12))
    except struct.error as exc:
        raise InvalidInputError(f"truncated checkpoint header: {exc}") from None
    offset = 12 + 4 * (layers + 1)
    expected = offset + 8 * sum((dims[l] + 1) * dims[l + 1] for l in range(layers))
    if len(blob) != expected:
        raise InvalidInputError(f"checkpoint has {len(blob)} bytes, expected {expected}")
    params = []
    for l in range(layers):
        for shape in ((dims[l], dims[l + 1]), (dims[l + 1],)):
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            params.append(arr.astype(np.float64).reshape(shape))
            offset += 8 * count
    return MlpModel.from_params(dims, params)


def model_bytes(model: MlpModel) -> int:
    return len(serialize(model))
