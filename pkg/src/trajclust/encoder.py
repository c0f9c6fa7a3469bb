"""Small feed-forward encoder with an explicit backward pass.

Architecture: affine layers with tanh between them, then l2 normalization of
the final affine output, so every embedding lies on the unit sphere. The
backward pass is written out by hand; for the normalization d = z / ||z||
the Jacobian-vector product is

    grad_z = (grad_d - (grad_d . d) d) / ||z||.

Gradients for a batch are summed over the batch in fixed order, so results
are bit-reproducible for a fixed batch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InputError, NumericError
from .util import rng

_INIT_STREAM = 31


@dataclass
class EncoderParams:
    weights: list[np.ndarray]  # layer l: (out_l, in_l)
    biases: list[np.ndarray]  # layer l: (out_l,)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def embedding_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )


@dataclass
class EncoderGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_encoder(
    input_dim: int, hidden_widths: list[int], embedding_dim: int, seed: int
) -> EncoderParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for weights and biases."""
    if input_dim < 1 or embedding_dim < 1 or any(w < 1 for w in hidden_widths):
        raise ConfigError("all layer widths must be positive")
    widths = [input_dim, *hidden_widths, embedding_dim]
    r = rng(seed, _INIT_STREAM)
    weights = []
    biases = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(r.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(r.uniform(-bound, bound, size=fan_out))
    return EncoderParams(weights, biases)


def _forward_cached(
    params: EncoderParams, features: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray], np.ndarray, np.ndarray]:
    """Returns (embeddings, layer inputs, pre-norm output, pre-norm norms)."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise InputError(
            f"encoder expects inputs of dimension {params.input_dim}, got {x.shape[1]}"
        )
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        pre = h @ w.T + b
        if not np.isfinite(pre).all():
            raise NumericError(f"non-finite value at layer {layer}")
        h = pre if layer == last else np.tanh(pre)
        if layer != last:
            acts.append(h)
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    if norms.min() == 0.0:
        raise NumericError("zero-norm output before normalization")
    return h / norms, acts, h, norms


def forward(params: EncoderParams, features: np.ndarray) -> np.ndarray:
    """Unit-norm embeddings; accepts one feature vector or a batch."""
    single = np.asarray(features).ndim == 1
    d, _, _, _ = _forward_cached(params, features)
    return d[0] if single else d


def backward(
    params: EncoderParams, features: np.ndarray, grad_output: np.ndarray
) -> EncoderGrads:
    """Parameter gradients of sum_b <grad_output_b, d_b>, summed over the batch."""
    single = np.asarray(features).ndim == 1
    d, acts, _, norms = _forward_cached(params, features)
    g = np.atleast_2d(np.asarray(grad_output, dtype=np.float64))
    if single and g.shape[0] != 1:
        raise InputError("gradient shape does not match features")
    if g.shape != d.shape:
        raise InputError("gradient shape does not match embeddings")

    # through d = z / ||z||
    grad = (g - (g * d).sum(axis=1, keepdims=True) * d) / norms

    grad_w = [np.empty(0)] * len(params.weights)
    grad_b = [np.empty(0)] * len(params.biases)
    for layer in range(len(params.weights) - 1, -1, -1):
        grad_w[layer] = grad.T @ acts[layer]
        grad_b[layer] = grad.sum(axis=0)
        if layer > 0:
            grad = (grad @ params.weights[layer]) * (1.0 - acts[layer] ** 2)
    return EncoderGrads(grad_w, grad_b)


@dataclass
class OptimizerState:
    velocity_w: list[np.ndarray]
    velocity_b: list[np.ndarray]
    learning_rate: float
    momentum: float
    schedule: tuple[tuple[int, float], ...]  # (epoch, multiplier), applied from epoch on

    def lr_at(self, epoch: int) -> float:
        lr = self.learning_rate
        for drop_epoch, mult in self.schedule:
            if epoch >= drop_epoch:
                lr *= mult
        return lr


def init_optimizer(
    params: EncoderParams,
    learning_rate: float,
    momentum: float,
    schedule=(),
) -> OptimizerState:
    if not learning_rate > 0:
        raise ConfigError("learning_rate must be strictly positive")
    if not 0.0 <= momentum < 1.0:
        raise ConfigError("momentum must lie in [0, 1)")
    sched = tuple((int(e), float(m)) for e, m in schedule)
    for _, mult in sched:
        if not 0.0 < mult <= 1.0:
            raise ConfigError("schedule multipliers must lie in (0, 1]")
    return OptimizerState(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
        float(learning_rate),
        float(momentum),
        sched,
    )


def sgd_step(
    params: EncoderParams,
    grads: EncoderGrads,
    state: OptimizerState,
    epoch: int,
) -> tuple[EncoderParams, OptimizerState]:
    """Momentum update: v <- momentum*v + g; p <- p - lr(epoch)*v."""
    lr = state.lr_at(epoch)
    new_vw = [state.momentum * v + g for v, g in zip(state.velocity_w, grads.weights)]
    new_vb = [state.momentum * v + g for v, g in zip(state.velocity_b, grads.biases)]
    new_w = [w - lr * v for w, v in zip(params.weights, new_vw)]
    new_b = [b - lr * v for b, v in zip(params.biases, new_vb)]
    return EncoderParams(new_w, new_b), replace(
        state, velocity_w=new_vw, velocity_b=new_vb
    )
