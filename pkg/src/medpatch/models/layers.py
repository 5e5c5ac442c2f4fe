"""
Parameterized layers. Each layer registers its tensors in a ParamStore under
a dotted name and is called on a Tensor.

Initialization is Kaiming-uniform over the fan-in, biases start at zero.
"""

import math
from typing import List, Optional

import numpy as np

from medpatch.core import ParamStore, Tensor, ops
from medpatch.core.nn import activation, conv_nd, dense, normalize, pool_nd, transpose_conv_nd

LEAKY_SLOPE = 0.01


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv:
    def __init__(self, store: ParamStore, name: str, dims: int, cin: int, cout: int, kernel: int,
                 rng: np.random.Generator, bias: bool = True, stride: int = 1, padding: Optional[int] = None):
        shape = (cout, cin) + (kernel,) * dims
        self.weight = store.add(f"{name}.weight", kaiming_uniform(rng, shape, cin * kernel ** dims))
        self.bias = store.add(f"{name}.bias", np.zeros(cout)) if bias else None
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv_nd(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class TransposeConv:
    def __init__(self, store: ParamStore, name: str, dims: int, cin: int, cout: int, kernel: int,
                 rng: np.random.Generator, stride: int = 2):
        shape = (cin, cout) + (kernel,) * dims
        self.weight = store.add(f"{name}.weight", kaiming_uniform(rng, shape, cout * kernel ** dims))
        self.bias = store.add(f"{name}.bias", np.zeros(cout))
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return transpose_conv_nd(x, self.weight, self.bias, stride=self.stride)


class Norm:
    """Instance norm (per sample) or batch norm (per batch, running statistics for evaluation)."""

    def __init__(self, store: ParamStore, name: str, channels: int, kind: str = "instance",
                 momentum: float = 0.1, eps: float = 1e-5):
        self.kind = kind
        self.name = name
        self.store = store
        self.gamma = store.add(f"{name}.gamma", np.ones(channels))
        self.beta = store.add(f"{name}.beta", np.zeros(channels))
        self.momentum = momentum
        self.eps = eps
        if kind == "batch":
            store.add_buffer(f"{name}.running_mean", np.zeros(channels))
            store.add_buffer(f"{name}.running_var", np.ones(channels))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        spatial = tuple(range(2, x.ndim))
        if self.kind == "instance":
            return normalize(x, self.gamma, self.beta, spatial, self.eps)

        shape = (1, -1) + (1,) * (x.ndim - 2)
        mean_key, var_key = f"{self.name}.running_mean", f"{self.name}.running_var"
        if training:
            axes = (0,) + spatial
            mean = x.data.mean(axis=axes)
            var = x.data.var(axis=axes)
            m = self.momentum
            self.store.set_buffer(mean_key, (1 - m) * self.store.buffer(mean_key) + m * mean)
            self.store.set_buffer(var_key, (1 - m) * self.store.buffer(var_key) + m * var)
            return normalize(x, self.gamma, self.beta, axes, self.eps)

        inv_std = 1.0 / np.sqrt(self.store.buffer(var_key) + self.eps)
        scale = ops.reshape(self.gamma, shape) * inv_std.reshape(shape)
        return (x - self.store.buffer(mean_key).reshape(shape)) * scale + ops.reshape(self.beta, shape)


class Dense:
    def __init__(self, store: ParamStore, name: str, fin: int, fout: int, rng: np.random.Generator):
        self.weight = store.add(f"{name}.weight", kaiming_uniform(rng, (fin, fout), fin))
        self.bias = store.add(f"{name}.bias", np.zeros(fout))

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weight, self.bias)


class ConvUnit:
    """conv (no bias, the norm absorbs it) -> instance norm -> leaky ReLU"""

    def __init__(self, store: ParamStore, name: str, dims: int, cin: int, cout: int, kernel: int,
                 rng: np.random.Generator):
        self.conv = Conv(store, f"{name}.conv", dims, cin, cout, kernel, rng, bias=False)
        self.norm = Norm(store, f"{name}.norm", cout)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return activation(self.norm(self.conv(x), training), "leaky_relu", alpha=LEAKY_SLOPE)


class ConvBlock:
    """Two conv units; the residual variant adds the first unit's output to the second's."""

    def __init__(self, store: ParamStore, name: str, dims: int, cin: int, cout: int,
                 rng: np.random.Generator, residual: bool = False, kernel: int = 3):
        self.first = ConvUnit(store, f"{name}.unit0", dims, cin, cout, kernel, rng)
        self.second = ConvUnit(store, f"{name}.unit1", dims, cout, cout, kernel, rng)
        self.residual = residual
        self.out_channels = cout

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = self.first(x, training)
        out = self.second(h, training)
        return out + h if self.residual else out


def inception_split(cout: int) -> List[int]:
    """Channels of the 1x1, 3x3 and 5x5 paths: a third each, remainder to 3x3."""
    third = cout // 3
    return [third, cout - 2 * third, third]


class InceptionBlock:
    """Parallel 1x1, 3x3 and 5x5 conv units concatenated along channels."""

    KERNELS = (1, 3, 5)

    def __init__(self, store: ParamStore, name: str, dims: int, cin: int, cout: int, rng: np.random.Generator):
        self.paths = [
            ConvUnit(store, f"{name}.k{k}", dims, cin, c, k, rng)
            for k, c in zip(self.KERNELS, inception_split(cout))
        ]
        self.out_channels = cout

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.concat([path(x, training) for path in self.paths], axis=1)


def max_pool(x: Tensor) -> Tensor:
    return pool_nd(x, "max", 2, 2)
