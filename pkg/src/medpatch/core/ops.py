"""
Elementwise, reduction and shape operations on Tensor.

Binary operations broadcast like numpy; gradients are summed back to the
operand shapes by backward().
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from medpatch.core.tensor import Tensor, as_tensor, make_result
from medpatch.errors import DimensionError

Axis = Optional[Union[int, Tuple[int, ...]]]


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result("div", a.data / b.data, (a, b),
                       lambda g: (g / b.data, -g * a.data / (b.data * b.data)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return make_result("power", a.data ** exponent, (a,),
                       lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return make_result("exp", y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return make_result("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient passes only where the value was inside."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return make_result("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % len(shape) for ax in axes)
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum(a, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))
    return make_result("sum", out, (a,), lambda g: (_expand_reduced(g, a.shape, axis, keepdims),))


def mean(a, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))
    count = a.data.size // max(out.size, 1)
    return make_result("mean", out, (a,),
                       lambda g: (_expand_reduced(g, a.shape, axis, keepdims) / count,))


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    return make_result("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul needs [N,K]x[K,M], got {a.shape} and {b.shape}")
    return make_result("matmul", a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != axis % len(ref)):
            raise DimensionError(f"concat along axis {axis}: incompatible shapes {ref} and {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return make_result("concat", out, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)))


def upsample_nearest(a, factors: Sequence[int]) -> Tensor:
    """Repeat every spatial axis (all axes after batch and channel) by its factor."""
    a = as_tensor(a)
    factors = tuple(int(f) for f in factors)
    if len(factors) != a.ndim - 2:
        raise DimensionError(f"upsample_nearest: {len(factors)} factors for {a.ndim - 2} spatial axes")
    out = a.data
    for i, f in enumerate(factors):
        out = np.repeat(out, f, axis=2 + i)

    def grad(g):
        folded = g.reshape(a.shape[:2] + tuple(x for extent, f in zip(a.shape[2:], factors) for x in (extent, f)))
        return (folded.sum(axis=tuple(3 + 2 * i for i in range(len(factors)))),)

    return make_result("upsample_nearest", out, (a,), grad)


Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.__pow__ = power
Tensor.__matmul__ = matmul
Tensor.sum = sum
Tensor.mean = mean
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 and not isinstance(shape[0], int) else shape)
Tensor.exp = exp
Tensor.log = log
