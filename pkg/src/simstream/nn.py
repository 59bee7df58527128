"""From-scratch MLP: SiLU activations, MSE loss, backprop, Adam. All float64.

The surrogate maps a standardized (x, y, z, rho) input to a standardized
velocity, through three 512-wide hidden layers with SiLU between them and a
linear output: dims (4, 512, 512, 512, 3), 529,411 parameters.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import NonFiniteGradient, ShapeMismatch

DEFAULT_DIMS = (4, 512, 512, 512, 3)

_CKPT_MAGIC = b"MLP1"


@dataclass
class MlpModel:
    dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )

    def copy(self) -> "MlpModel":
        return MlpModel(
            dims=self.dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_model(rng: np.random.Generator, dims: tuple[int, ...] = DEFAULT_DIMS) -> MlpModel:
    """Fan-in uniform weights in [-1/sqrt(fan_in), +1/sqrt(fan_in)], zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims=tuple(dims), weights=weights, biases=biases)


def silu(v: np.ndarray) -> np.ndarray:
    """Elementwise v * sigmoid(v)."""
    return v * expit(v)


def forward(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Predictions for a ``(batch, dims[0])`` input block."""
    h = np.asarray(inputs, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != model.dims[0]:
        raise ShapeMismatch(f"expected (n, {model.dims[0]}) inputs, got {h.shape}")
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i != last:
            h = silu(h)
    return h


def mse_loss(predictions: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over every element, and its gradient w.r.t. predictions."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ShapeMismatch(f"predictions {predictions.shape} vs targets {targets.shape}")
    diff = predictions - targets
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


def backward(model: MlpModel, inputs: np.ndarray, targets: np.ndarray) -> tuple[float, Gradients]:
    """Loss and exact gradients of mse_loss(forward(inputs), targets).

    SiLU'(v) = sigmoid(v) * (1 + v * (1 - sigmoid(v))).
    """
    h = np.asarray(inputs, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != model.dims[0]:
        raise ShapeMismatch(f"expected (n, {model.dims[0]}) inputs, got {h.shape}")
    last = len(model.weights) - 1
    activations = [h]
    sigmoids = []
    pre_acts = []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if i != last:
            sg = expit(z)
            pre_acts.append(z)
            sigmoids.append(sg)
            h = z * sg
        else:
            h = z
        activations.append(h)
    loss, g = mse_loss(h, targets)
    grad_w: list[np.ndarray] = [None] * len(model.weights)  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * len(model.biases)  # type: ignore[list-item]
    for i in range(last, -1, -1):
        grad_w[i] = activations[i].T @ g
        grad_b[i] = g.sum(axis=0)
        if i > 0:
            g = g @ model.weights[i].T
            z, sg = pre_acts[i - 1], sigmoids[i - 1]
            g = g * (sg * (1.0 + z * (1.0 - sg)))
    return loss, Gradients(weights=grad_w, biases=grad_b)


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators, shaped like the model parameters."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m_weights: list[np.ndarray] = field(default_factory=list)
    v_weights: list[np.ndarray] = field(default_factory=list)
    m_biases: list[np.ndarray] = field(default_factory=list)
    v_biases: list[np.ndarray] = field(default_factory=list)


def init_adam(
    model: MlpModel,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    return AdamState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        m_weights=[np.zeros_like(w) for w in model.weights],
        v_weights=[np.zeros_like(w) for w in model.weights],
        m_biases=[np.zeros_like(b) for b in model.biases],
        v_biases=[np.zeros_like(b) for b in model.biases],
    )


def adam_step(model: MlpModel, state: AdamState, grads: Gradients) -> None:
    """One in-place Adam update; raises NonFiniteGradient on a diverged gradient."""
    for g in grads.weights + grads.biases:
        if not np.isfinite(g).all():
            raise NonFiniteGradient("non-finite gradient; aborting the run")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for params, g_list, m_list, v_list in (
        (model.weights, grads.weights, state.m_weights, state.v_weights),
        (model.biases, grads.biases, state.m_biases, state.v_biases),
    ):
        for p, g, m, v in zip(params, g_list, m_list, v_list):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


def save_checkpoint(model: MlpModel, path: str | Path) -> None:
    """Binary dump: magic, u32 layer count, u32 dims, then per layer the raw
    little-endian float64 weight matrix (row-major) and bias vector."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(model.dims)))
        fh.write(struct.pack(f"<{len(model.dims)}I", *model.dims))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> MlpModel:
    """Reload a checkpoint; forward outputs reproduce the saved model bit-exactly."""
    raw = Path(path).read_bytes()
    if raw[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path} is not a model checkpoint")
    (n_dims,) = struct.unpack_from("<I", raw, 4)
    dims = struct.unpack_from(f"<{n_dims}I", raw, 8)
    offset = 8 + 4 * n_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
    if offset != len(raw):
        raise ValueError(f"{path} has {len(raw) - offset} trailing bytes")
    return MlpModel(dims=tuple(int(d) for d in dims), weights=weights, biases=biases)
