"""Minimal dense network substrate with explicit backprop and Adam.

Batches are row-major: an input of shape ``(batch, in_dim)`` produces
``(batch, out_dim)``. A 1-D input is treated as a batch of one and the output
is returned 1-D again.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch

RELU = "relu"
IDENTITY = "identity"
ACTIVATIONS = (RELU, IDENTITY)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)
    activation: str = RELU

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise DimensionMismatch(
                f"weights {self.weights.shape} and biases {self.biases.shape} do not chain"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Mlp:
    """Stack of dense layers.

    An empty stack is a pass-through (the identity / concatenation encoder);
    its width must then be given explicitly via ``width``.
    """

    layers: list[DenseLayer]
    dropout_rate: float = 0.0
    width: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionMismatch(f"layer widths {a.out_dim} -> {b.in_dim} do not chain")
        if not self.layers and self.width is None:
            raise ValueError("an empty Mlp needs an explicit width")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim if self.layers else self.width

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim if self.layers else self.width

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self.layers:
            params.extend([layer.weights, layer.biases])
        return params


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    dropout_rate: float = 0.0,
    output_activation: str = IDENTITY,
) -> Mlp:
    """He-uniform initialised MLP; ``sizes`` includes the input width.

    Hidden layers use ReLU; the last layer uses ``output_activation``.
    """
    sizes = list(sizes)
    if len(sizes) < 1:
        raise ValueError("sizes must at least name the input width")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = output_activation if i == len(sizes) - 2 else RELU
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Mlp(layers, dropout_rate, width=sizes[0] if len(sizes) == 1 else None)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    pre: list[np.ndarray] = field(default_factory=list)  # pre-activations
    masks: list[Optional[np.ndarray]] = field(default_factory=list)  # scaled dropout masks
    squeeze: bool = False


def forward(net: Mlp, x, training: bool = False, rng: Optional[np.random.Generator] = None):
    """Evaluate the network. Returns ``(output, cache)``.

    Inverted dropout follows every hidden activation when ``training`` is set;
    at inference the rng is never touched.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != net.in_dim:
        raise DimensionMismatch(f"input width {x.shape[1]} != network input {net.in_dim}")
    drop = training and net.dropout_rate > 0.0
    if drop and rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = 1.0 - net.dropout_rate
    cache = ForwardCache(squeeze=squeeze)
    a = x
    n = len(net.layers)
    for i, layer in enumerate(net.layers):
        cache.inputs.append(a)
        z = a @ layer.weights.T + layer.biases
        cache.pre.append(z)
        a = np.maximum(z, 0.0) if layer.activation == RELU else z
        mask = None
        if drop and i < n - 1:
            mask = (rng.random(a.shape) < keep) / keep
            a = a * mask
        cache.masks.append(mask)
    return (a[0] if squeeze else a), cache


def backward(net: Mlp, cache: ForwardCache, upstream_grad):
    """Backpropagate ``upstream_grad`` (dL/d output).

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is ordered like
    ``net.parameters()``. Gradients are summed over the batch.
    """
    g = np.asarray(upstream_grad, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    if g.shape[1] != net.out_dim:
        raise DimensionMismatch(f"upstream width {g.shape[1]} != network output {net.out_dim}")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if cache.masks[i] is not None:
            g = g * cache.masks[i]
        if layer.activation == RELU:
            g = g * (cache.pre[i] > 0.0)
        grads[2 * i] = g.T @ cache.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weights
    return grads, (g[0] if cache.squeeze else g)


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionMismatch("params, grads and optimizer state differ in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DimensionMismatch(f"param {p.shape} vs grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if norm > max_norm > 0:
        s = max_norm / norm
        for g in grads:
            g *= s
    return norm
