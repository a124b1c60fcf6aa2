"""Minimal dense feedforward networks with manual backprop.

Hidden layers use a configurable activation; the output layer is always
linear. Callers that need a squashed output apply it themselves, which
keeps one forward/backward core for every network in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NetError(ValueError):
    """Raised for shape mismatches or non-finite intermediates."""


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    raise NetError(f"unknown activation {name!r}")


def _act_grad(name: str, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - post * post
    if name == "relu":
        return (pre > 0.0).astype(pre.dtype)
    raise NetError(f"unknown activation {name!r}")


@dataclass
class Mlp:
    """Stack of affine layers; ``activation`` applies to all but the last."""

    weights: list[np.ndarray]  # layer l: (fan_in, fan_out)
    biases: list[np.ndarray]  # layer l: (fan_out,)
    activation: str = "tanh"

    @property
    def in_dim(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.weights[-1].shape[1])

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"net.{i}.W", w))
            out.append((f"net.{i}.b", b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
        )


def mlp_init(
    sizes: list[int], seed_or_rng: int | np.random.Generator, activation: str = "tanh"
) -> Mlp:
    """Uniform init in ±sqrt(6/(fan_in+fan_out)) per layer, zero biases."""
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise NetError(f"bad layer sizes {sizes!r}")
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(
            rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)
        )
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return Mlp(weights=weights, biases=biases, activation=activation)


def mlp_forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Batched forward pass; returns output and the cache for backprop.

    ``x`` is (B, in_dim) or (in_dim,); output matches the batch shape.
    """
    squeeze = x.ndim == 1
    h = np.atleast_2d(np.asarray(x))
    if h.shape[1] != net.in_dim:
        raise NetError(f"input dim {h.shape[1]}, network expects {net.in_dim}")
    cache = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        pre = h @ w + b
        if not np.isfinite(pre).all():
            raise NetError(f"non-finite value at layer {i}")
        post = pre if i == net.num_layers - 1 else _act(net.activation, pre)
        cache.append((h, pre, post))
        h = post
    return (h[0] if squeeze else h), cache


def mlp_backward(
    net: Mlp, cache: list, grad_out: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Gradients of sum(grad_out * output) w.r.t. params and the input.

    Returns per-layer (dW, db) in layer order plus the (B, in_dim) input
    gradient. ``grad_out`` must match the forward output's batch shape.
    """
    g = np.atleast_2d(np.asarray(grad_out))
    if g.shape[1] != net.out_dim:
        raise NetError(f"grad dim {g.shape[1]}, network outputs {net.out_dim}")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * net.num_layers  # type: ignore[list-item]
    for i in range(net.num_layers - 1, -1, -1):
        h_in, pre, post = cache[i]
        if i != net.num_layers - 1:
            g = g * _act_grad(net.activation, pre, post)
        grads[i] = (h_in.T @ g, g.sum(axis=0))
        g = g @ net.weights[i].T
    return grads, g
