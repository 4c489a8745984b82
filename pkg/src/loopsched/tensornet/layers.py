"""Dense layers and an LSTM cell with hand-written backward passes.

All tensors are float64, batch-major 2D (batch, features). Forward passes
return caches consumed by the matching backward, which accumulates parameter
gradients into the store and returns the input gradient.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .core import Parameter, ParameterStore

ACTIVATIONS = ("IDENTITY", "RELU", "TANH", "SOFTPLUS")


class ShapeError(ValueError):
    pass


def glorot_uniform(rng, n_out: int, n_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def activation_forward(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "IDENTITY":
        return z
    if kind == "RELU":
        return np.maximum(z, 0.0)
    if kind == "TANH":
        return np.tanh(z)
    if kind == "SOFTPLUS":
        # stable: log1p(exp(-|z|)) + max(z, 0)
        return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(kind: str, dy: np.ndarray, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if kind == "IDENTITY":
        return dy
    dz = np.empty_like(dy)
    if kind == "RELU":
        kernels.relu_bwd(dy, z, dz)
    elif kind == "TANH":
        kernels.tanh_bwd(dy, y, dz)
    elif kind == "SOFTPLUS":
        dz[:] = dy * _sigmoid(z)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return dz


class DenseLayer:
    """y = act(x @ W.T + b), W is (n_out, n_in)."""

    def __init__(self, store: ParameterStore, name: str, n_in: int, n_out: int,
                 activation: str = "RELU", rng: np.random.Generator | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        self.W = store.add(f"{name}/W", glorot_uniform(rng, n_out, n_in))
        self.b = store.add(f"{name}/b", np.zeros(n_out))

    def forward(self, x: np.ndarray):
        x = np.atleast_2d(x)
        if x.shape[1] != self.n_in:
            raise ShapeError(f"{self.name}: input width {x.shape[1]} != {self.n_in}")
        z = x @ self.W.value.T + self.b.value
        y = activation_forward(self.activation, z)
        return y, (x, z, y)

    def backward(self, dy: np.ndarray, cache):
        x, z, y = cache
        dy = np.atleast_2d(dy)
        dz = activation_backward(self.activation, dy, z, y)
        self.W.grad += dz.T @ x
        self.b.grad += dz.sum(axis=0)
        return dz @ self.W.value


class MLP:
    """Stack of dense layers; widths[i] is layer i's output width."""

    def __init__(self, store: ParameterStore, name: str, n_in: int, widths,
                 activation: str = "RELU", final_activation: str = "IDENTITY",
                 rng: np.random.Generator | None = None):
        self.layers = []
        last = n_in
        for i, w in enumerate(widths):
            act = final_activation if i == len(widths) - 1 else activation
            self.layers.append(DenseLayer(store, f"{name}/fc{i}", last, w, act, rng))
            last = w
        self.n_in = n_in
        self.n_out = last

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def backward(self, dy, caches):
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(dy, c)
        return dy


class LSTMCell:
    """Standard LSTM; gate order (input, forget, cell, output) in one 4H block.

    Forget-gate bias initializes to 1.
    """

    def __init__(self, store: ParameterStore, name: str, n_in: int, n_hidden: int,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.n_in = n_in
        self.n_hidden = n_hidden
        self.Wx = store.add(f"{name}/Wx", glorot_uniform(rng, 4 * n_hidden, n_in))
        self.Wh = store.add(f"{name}/Wh", glorot_uniform(rng, 4 * n_hidden, n_hidden))
        bias = np.zeros(4 * n_hidden)
        bias[n_hidden:2 * n_hidden] = 1.0
        self.b = store.add(f"{name}/b", bias)

    def step(self, x: np.ndarray, h: np.ndarray, c: np.ndarray):
        H = self.n_hidden
        if x.shape[1] != self.n_in:
            raise ShapeError(f"{self.name}: input width {x.shape[1]} != {self.n_in}")
        z = x @ self.Wx.value.T + h @ self.Wh.value.T + self.b.value
        ig = _sigmoid(z[:, :H])
        fg = _sigmoid(z[:, H:2 * H])
        gg = np.tanh(z[:, 2 * H:3 * H])
        og = _sigmoid(z[:, 3 * H:])
        c_new = fg * c + ig * gg
        tanh_c = np.tanh(c_new)
        h_new = og * tanh_c
        cache = (x, h, c, ig, fg, gg, og, tanh_c)
        return h_new, c_new, cache

    def step_backward(self, dh: np.ndarray, dc_in: np.ndarray, cache):
        x, h_prev, c_prev, ig, fg, gg, og, tanh_c = cache
        B = dh.shape[0]
        dz = np.empty((B, 4 * self.n_hidden))
        dc_prev = np.empty_like(dc_in)
        kernels.lstm_bwd_gates(dh, dc_in, ig, fg, gg, og, tanh_c, c_prev, dz, dc_prev)
        self.Wx.grad += dz.T @ x
        self.Wh.grad += dz.T @ h_prev
        self.b.grad += dz.sum(axis=0)
        dx = dz @ self.Wx.value
        dh_prev = dz @ self.Wh.value
        return dx, dh_prev, dc_prev

    def sequence(self, inputs):
        """Run the recurrence from a zero state; returns (h_T, caches).

        inputs: list of (B, n_in) arrays, one per step, nonempty.
        """
        if len(inputs) == 0:
            raise ValueError(f"{self.name}: empty input sequence")
        B = inputs[0].shape[0]
        h = np.zeros((B, self.n_hidden))
        c = np.zeros((B, self.n_hidden))
        caches = []
        for x in inputs:
            h, c, cache = self.step(np.atleast_2d(x), h, c)
            caches.append(cache)
        return h, caches

    def sequence_backward(self, dh_T: np.ndarray, caches):
        """Backprop through a sequence() run; returns per-step input grads."""
        dh = np.atleast_2d(dh_T)
        dc = np.zeros_like(dh)
        dxs = [None] * len(caches)
        for t in range(len(caches) - 1, -1, -1):
            dx, dh, dc = self.step_backward(dh, dc, caches[t])
            dxs[t] = dx
        return dxs
