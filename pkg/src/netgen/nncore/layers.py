"""Parameterized layers with exact gradients.

Layer set: dense, conv1d, relu, softmax over the last axis, global 1-D max
pooling, batch norm, GRU cell. Initialization is fully seeded: dense/conv
weights uniform in +-sqrt(6/(fan_in+fan_out)) with zero biases, GRU weights
uniform in +-sqrt(1/hidden) with zero biases.
"""
from __future__ import annotations

import numpy as np

from .tensor import (
    Param,
    Tensor,
    as_tensor,
    conv1d,
    gru_cell,
    max_last,
    relu,
    softmax,
)

__all__ = [
    "Dense",
    "Conv1d",
    "ReLU",
    "SoftmaxRows",
    "MaxPool1dGlobal",
    "BatchNorm1d",
    "GruCell",
    "layer_forward_backward",
]


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    """Affine map x @ w + b on the last axis."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.w = Param(_glorot(rng, (n_in, n_out), n_in, n_out))
        self.b = Param(np.zeros(n_out))

    def __call__(self, x) -> Tensor:
        return as_tensor(x) @ self.w + self.b

    def params(self):
        return [("w", self.w), ("b", self.b)]


class Conv1d:
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, rng: np.random.Generator):
        self.stride = stride
        self.w = Param(_glorot(rng, (c_out, c_in, kernel), c_in * kernel, c_out * kernel))
        self.b = Param(np.zeros(c_out))

    def __call__(self, x) -> Tensor:
        return conv1d(x, self.w, self.b, stride=self.stride)

    def params(self):
        return [("w", self.w), ("b", self.b)]


class ReLU:
    def __call__(self, x) -> Tensor:
        return relu(x)

    def params(self):
        return []


class SoftmaxRows:
    """Row-stochastic softmax over the last axis."""

    def __call__(self, x) -> Tensor:
        return softmax(x)

    def params(self):
        return []


class MaxPool1dGlobal:
    """Collapses the temporal axis to the per-channel maximum."""

    def __call__(self, x) -> Tensor:
        return max_last(x)

    def params(self):
        return []


class BatchNorm1d:
    """Batch norm over axis 0 of a (batch, features) tensor.

    Training mode normalizes with batch statistics and updates running
    stats (momentum 0.1, unbiased variance); eval mode uses the running
    stats. Training mode requires batch size >= 2.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(np.ones(num_features))
        self.beta = Param(np.zeros(num_features))
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.training = True

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if self.training:
            batch = x.data.shape[0]
            if batch < 2:
                raise ValueError(
                    "batch norm is undefined for a training batch of size 1; "
                    "use a batch of at least 2 samples"
                )
            mean = x.mean(axis=0)
            centered = x - mean
            var = (centered * centered).mean(axis=0)
            inv = (var + self.eps) ** -0.5
            out = centered * inv * self.gamma + self.beta
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mean.data
            self.running_var = (1 - m) * self.running_var + m * var.data * batch / (batch - 1)
            return out
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        return (x - Tensor(self.running_mean)) * Tensor(inv) * self.gamma + self.beta

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def set_buffers(self, running_mean: np.ndarray, running_var: np.ndarray) -> None:
        self.running_mean = np.array(running_mean, dtype=np.float64)
        self.running_var = np.array(running_var, dtype=np.float64)


class GruCell:
    """Single GRU step; hidden state width `hidden`."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        bound = np.sqrt(1.0 / hidden)
        self.hidden = hidden
        self.w_ih = Param(rng.uniform(-bound, bound, size=(n_in, 3 * hidden)))
        self.w_hh = Param(rng.uniform(-bound, bound, size=(hidden, 3 * hidden)))
        self.b_ih = Param(np.zeros(3 * hidden))
        self.b_hh = Param(np.zeros(3 * hidden))

    def __call__(self, x, h) -> Tensor:
        return gru_cell(x, h, self.w_ih, self.w_hh, self.b_ih, self.b_hh)

    def params(self):
        return [
            ("w_ih", self.w_ih),
            ("w_hh", self.w_hh),
            ("b_ih", self.b_ih),
            ("b_hh", self.b_hh),
        ]


def layer_forward_backward(layer, inputs, upstream):
    """Run one layer forward and backward in isolation.

    `inputs` is an array or a tuple of arrays (the GRU cell takes (x, h)).
    Returns (output, input gradient(s), {param name: gradient}).
    """
    single = not isinstance(inputs, (tuple, list))
    arrays = (inputs,) if single else tuple(inputs)
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("layer input contains non-finite values")
    tensors = [Tensor(a) for a in arrays]
    out = layer(*tensors)
    upstream = np.asarray(upstream, dtype=out.data.dtype)
    if upstream.shape != out.data.shape:
        raise ValueError(
            f"upstream gradient shape {upstream.shape} does not match output {out.data.shape}"
        )
    out.backward(upstream)
    input_grads = tensors[0].grad if single else tuple(t.grad for t in tensors)
    param_grads = {name: p.grad for name, p in layer.params()}
    return out.data, input_grads, param_grads
