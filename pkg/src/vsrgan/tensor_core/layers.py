"""Stateful layers built on the functional kernels in :mod:`.ops`.

A layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients during ``backward``. Caches hold only the
most recent forward call, so forward/backward on one instance must be
paired and are not thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from ..errors import ShapeError


@dataclass(eq=False)
class Parameter:
    """A learnable tensor with its gradient accumulator and ADAM moments."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=ops.DTYPE)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def zero_grad(self):
        self.grad[...] = 0.0

    def reset_moments(self):
        self.adam_m[...] = 0.0
        self.adam_v[...] = 0.0

    def accumulate(self, g):
        if g.shape != self.value.shape:
            raise ShapeError(f"{self.name}: gradient shape {g.shape} != {self.value.shape}")
        self.grad += g


class Module:
    """Minimal container: named parameters, buffers and child modules."""

    def named_parameters(self):
        out = {}
        for key, obj in vars(self).items():
            if isinstance(obj, Parameter):
                out[obj.name] = obj
            elif isinstance(obj, Module):
                out.update(obj.named_parameters())
            elif isinstance(obj, (list, tuple)):
                for item in obj:
                    if isinstance(item, Module):
                        out.update(item.named_parameters())
        return out

    def named_buffers(self):
        out = {}
        for obj in vars(self).values():
            if isinstance(obj, Module):
                out.update(obj.named_buffers())
            elif isinstance(obj, (list, tuple)):
                for item in obj:
                    if isinstance(item, Module):
                        out.update(item.named_buffers())
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    def state_tensors(self):
        """Parameters and buffers as one name -> array mapping."""
        tensors = {name: p.value for name, p in self.named_parameters().items()}
        tensors.update(self.named_buffers())
        return tensors

    def load_state_tensors(self, tensors):
        params = self.named_parameters()
        for name, p in params.items():
            p.value[...] = tensors[name]
        self._load_buffers(tensors)

    def _load_buffers(self, tensors):
        for obj in vars(self).values():
            if isinstance(obj, Module):
                obj._load_buffers(tensors)
            elif isinstance(obj, (list, tuple)):
                for item in obj:
                    if isinstance(item, Module):
                        item._load_buffers(tensors)


def he_normal(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv2d(Module):
    def __init__(self, name, cin, cout, kernel=3, stride=1, pad=None, bias=True, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.pad = kernel // 2 if pad is None else pad
        self.weight = Parameter(
            f"{name}.weight", he_normal(rng, (cout, cin, kernel, kernel), cin * kernel * kernel)
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(cout)) if bias else None
        self._x = None

    def forward(self, x):
        self._x = x
        b = None if self.bias is None else self.bias.value
        return ops.conv2d_forward(x, self.weight.value, b, self.stride, self.pad)

    def backward(self, grad_out, need_input_grad=True, accumulate=True):
        gx, gw, gb = ops.conv2d_backward(
            grad_out, self._x, self.weight.value, self.stride, self.pad, need_input_grad
        )
        if accumulate:
            self.weight.accumulate(gw)
            if self.bias is not None:
                self.bias.accumulate(gb)
        return gx


class ReLU(Module):
    def __init__(self, slope=0.0):
        self.slope = slope
        self._x = None

    def forward(self, x):
        self._x = x
        return ops.leaky_relu_forward(x, self.slope)

    def backward(self, grad_out, accumulate=True):
        return ops.leaky_relu_backward(grad_out, self._x, self.slope)


class BatchNorm2d(Module):
    def __init__(self, name, channels, momentum=0.1, eps=1e-5):
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._cache = None

    def forward(self, x, train=True):
        out, self._cache, (rm, rv) = ops.batchnorm_forward(
            x, self.gamma.value, self.beta.value, self.running_mean, self.running_var,
            train=train, momentum=self.momentum, eps=self.eps,
        )
        self.running_mean, self.running_var = rm, rv
        return out

    def backward(self, grad_out, accumulate=True):
        gx, gg, gb = ops.batchnorm_backward(grad_out, self._cache)
        if accumulate:
            self.gamma.accumulate(gg)
            self.beta.accumulate(gb)
        return gx

    def named_buffers(self):
        return {
            f"{self.name}.running_mean": self.running_mean,
            f"{self.name}.running_var": self.running_var,
        }

    def _load_buffers(self, tensors):
        self.running_mean = np.array(tensors[f"{self.name}.running_mean"], dtype=ops.DTYPE)
        self.running_var = np.array(tensors[f"{self.name}.running_var"], dtype=ops.DTYPE)


class Linear(Module):
    def __init__(self, name, fan_in, fan_out, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(f"{name}.weight", he_normal(rng, (fan_out, fan_in), fan_in))
        self.bias = Parameter(f"{name}.bias", np.zeros(fan_out))
        self._x = None

    def forward(self, x):
        self._x = x
        return ops.fully_connected_forward(x, self.weight.value, self.bias.value)

    def backward(self, grad_out, accumulate=True):
        gx, gw, gb = ops.fully_connected_backward(grad_out, self._x, self.weight.value)
        if accumulate:
            self.weight.accumulate(gw)
            self.bias.accumulate(gb)
        return gx


class Sigmoid(Module):
    def __init__(self):
        self._out = None

    def forward(self, x):
        self._out = ops.sigmoid_forward(x)
        return self._out

    def backward(self, grad_out, accumulate=True):
        return ops.sigmoid_backward(grad_out, self._out)


class AvgPool2(Module):
    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return ops.avg_pool2_forward(x)

    def backward(self, grad_out, accumulate=True):
        return ops.avg_pool2_backward(grad_out, self._shape)
