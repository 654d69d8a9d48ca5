"""A small fully connected network with hand-written backpropagation.

Hidden layers use ReLU, the output layer is affine (logits). Weights of layer
``l`` have shape ``(out, in)``; a batch ``X`` has shape ``(n, in)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass
class ToyNet:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("a network needs at least an input and an output size")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer required")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            n_in, n_out = self.layer_sizes[l], self.layer_sizes[l + 1]
            if w.shape != (n_out, n_in) or b.shape != (n_out,):
                raise ValueError(
                    f"layer {l}: expected W{(n_out, n_in)} b{(n_out,)}, got W{w.shape} b{b.shape}"
                )

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], rng: np.random.Generator, seed: Optional[int] = None) -> "ToyNet":
        """Uniform init in [-r, r] with r = 1/sqrt(fan_in), for weights and biases."""
        weights, biases = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            r = 1.0 / np.sqrt(n_in)
            weights.append(rng.uniform(-r, r, size=(n_out, n_in)))
            biases.append(rng.uniform(-r, r, size=n_out))
        return cls(tuple(layer_sizes), weights, biases, seed)

    @classmethod
    def seeded(cls, layer_sizes: Sequence[int], seed: int) -> "ToyNet":
        return cls.initialize(layer_sizes, np.random.default_rng(seed), seed)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "ToyNet":
        return ToyNet(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
        )

    def get_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_params(self, theta: np.ndarray) -> "ToyNet":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got {theta.shape}")
        weights, biases, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(theta[k:k + w.size].reshape(w.shape).copy())
            k += w.size
            biases.append(theta[k:k + b.size].copy())
            k += b.size
        return ToyNet(self.layer_sizes, weights, biases, self.seed)


def _forward(net: ToyNet, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    a = x
    cache = [a]
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        a = z if l == last else np.maximum(z, 0.0)
        cache.append(a)
    return a, cache


def net_forward(net: ToyNet, x) -> np.ndarray:
    """Logits for one input vector ``(d,)`` or a batch ``(n, d)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise ValueError(f"input must have {net.input_dim} features, got shape {x.shape}")
    out, _ = _forward(net, batch)
    return out[0] if single else out


def net_backward(net: ToyNet, x: np.ndarray, grad_logits: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the flattened parameters, given dL/dlogits.

    The returned vector uses the same layout as :meth:`ToyNet.get_params`.
    """
    _, cache = _forward(net, np.asarray(x, dtype=float))
    delta = np.asarray(grad_logits, dtype=float)
    grads_w: list[np.ndarray] = [None] * len(net.weights)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(net.weights)  # type: ignore[list-item]
    for l in range(len(net.weights) - 1, -1, -1):
        a_prev = cache[l]
        grads_w[l] = delta.T @ a_prev
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            # cache[l] is the ReLU output of layer l-1; its positive part marks active units.
            delta = (delta @ net.weights[l]) * (cache[l] > 0)
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb)
    return np.concatenate(parts)
