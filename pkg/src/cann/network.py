"""Residual tanh feedforward network acting on stencil vectors.

All parameters of an :class:`MlpParams` live in one flat float64 vector;
``weights`` and ``biases`` are views into it. Layer ``l`` maps ``sizes[l]``
units to ``sizes[l+1]`` units; hidden layers use tanh, the output layer is
linear and has a single unit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .grid import ConfigurationError

CHECKPOINT_FORMAT = "cann-checkpoint/1"


def param_count(sizes: Sequence[int]) -> int:
    return int(sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])))


def _check_sizes(sizes: Sequence[int]) -> tuple:
    sizes = tuple(int(n) for n in sizes)
    if len(sizes) < 3:
        raise ConfigurationError(f"need at least one hidden layer, got sizes {sizes}")
    if any(n < 1 for n in sizes):
        raise ConfigurationError(f"layer sizes must be positive, got {sizes}")
    if sizes[-1] != 1:
        raise ConfigurationError(f"output layer must have one unit, got {sizes[-1]}")
    return sizes


def _views(flat: np.ndarray, sizes: tuple):
    weights, biases = [], []
    pos = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos:pos + n_in * n_out].reshape(n_out, n_in))
        pos += n_in * n_out
        biases.append(flat[pos:pos + n_out])
        pos += n_out
    return weights, biases


@dataclass
class MlpParams:
    sizes: tuple
    theta: np.ndarray
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sizes = _check_sizes(self.sizes)
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64).reshape(-1)
        if self.theta.size != param_count(self.sizes):
            raise ConfigurationError(
                f"{self.theta.size} parameters given, sizes {self.sizes} need {param_count(self.sizes)}")
        if (self.hidden_activation, self.output_activation) != ("tanh", "identity"):
            raise ConfigurationError("only tanh hidden / identity output activations are supported")

    @property
    def weights(self) -> list:
        return _views(self.theta, self.sizes)[0]

    @property
    def biases(self) -> list:
        return _views(self.theta, self.sizes)[1]

    @property
    def n_params(self) -> int:
        return self.theta.size

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, self.theta.copy(), seed=self.seed, meta=dict(self.meta))

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "MlpParams":
        sizes = _check_sizes(sizes)
        return cls(sizes, np.zeros(param_count(sizes)))

    @classmethod
    def from_layers(cls, weights: Sequence, biases: Sequence) -> "MlpParams":
        sizes = [np.shape(weights[0])[1]] + [np.shape(w)[0] for w in weights]
        if len(weights) != len(biases):
            raise ConfigurationError("need one bias vector per weight matrix")
        for l, (w, b) in enumerate(zip(weights, biases)):
            if np.shape(w) != (sizes[l + 1], sizes[l]) or np.shape(b) != (sizes[l + 1],):
                raise ConfigurationError(
                    f"layer {l}: weight {np.shape(w)} / bias {np.shape(b)} break the shape chain")
        parts = []
        for w, b in zip(weights, biases):
            parts += [np.asarray(w, dtype=np.float64).ravel(), np.asarray(b, dtype=np.float64).ravel()]
        return cls(tuple(sizes), np.concatenate(parts))

    def output_bound(self) -> float:
        """Upper bound on |N(v)| when the last hidden layer saturates."""
        return float(np.abs(self.biases[-1]).sum() + np.abs(self.weights[-1]).sum())


@dataclass
class Gradients:
    sizes: tuple
    flat: np.ndarray

    @property
    def weights(self) -> list:
        return _views(self.flat, self.sizes)[0]

    @property
    def biases(self) -> list:
        return _views(self.flat, self.sizes)[1]


INIT_GAIN = 0.1


def init_params(sizes: Sequence[int], seed: int, gain: float = INIT_GAIN) -> MlpParams:
    """Glorot-uniform weights scaled by ``gain``, zero biases, reproducible from ``seed``.

    A small gain keeps the untrained network close to linear, which helps it
    generalize off the narrow set of stencil vectors it is trained on.
    """
    sizes = _check_sizes(sizes)
    rng = np.random.default_rng(seed)
    theta = np.zeros(param_count(sizes))
    weights, _ = _views(theta, sizes)
    for w in weights:
        n_out, n_in = w.shape
        limit = gain * np.sqrt(6.0 / (n_in + n_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return MlpParams(sizes, theta, seed=int(seed))


def _as_batch(params: MlpParams, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != params.sizes[0]:
        raise ValueError(f"input has length {v.shape[-1]}, network expects {params.sizes[0]}")
    return v.reshape(-1, params.sizes[0])


def forward(params: MlpParams, v) -> float:
    return float(kernels.forward_batch(params.theta, params.sizes, _as_batch(params, v))[0])


def forward_batch(params: MlpParams, X) -> np.ndarray:
    return kernels.forward_batch(params.theta, params.sizes, _as_batch(params, X))


def predict_cell(params: MlpParams, v, center: float) -> float:
    """Residual update: next cell average = current average + N(v)."""
    return center + forward(params, v)


def backward(params: MlpParams, v, upstream: float) -> Gradients:
    """Gradient of ``upstream * N(v)`` with respect to every weight and bias."""
    grad = np.zeros(params.n_params)
    kernels.backward_batch(params.theta, params.sizes, _as_batch(params, v),
                           np.array([float(upstream)]), grad)
    return Gradients(params.sizes, grad)


def save_checkpoint(params: MlpParams, path, **metadata) -> None:
    """Write a JSON checkpoint; floats are stored with full round-trip precision."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "sizes": list(params.sizes),
        "hidden_activation": params.hidden_activation,
        "output_activation": params.output_activation,
        "seed": params.seed,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "meta": {**params.meta, **metadata},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path) -> MlpParams:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not a JSON checkpoint ({exc})") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"{path}: unknown checkpoint format {doc.get('format')!r}")
    sizes = tuple(doc["sizes"])
    params = MlpParams.from_layers(doc["weights"], doc["biases"])
    if params.sizes != sizes:
        raise ConfigurationError(
            f"{path}: weight shapes give sizes {params.sizes} but header says {sizes}")
    params.hidden_activation = doc.get("hidden_activation", "tanh")
    params.output_activation = doc.get("output_activation", "identity")
    params.seed = doc.get("seed")
    params.meta = doc.get("meta", {})
    return params
