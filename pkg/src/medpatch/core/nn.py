"""
Neural-network kernels: convolution, transpose convolution, pooling,
activations, dense layers and normalization, each with its gradient rule.

Layout is channels-first: [B, C, S1, ..., Sd] with d in {2, 3}.
Convolution is cross-correlation (no kernel flip) with zero padding.
"""

import itertools
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from medpatch.core.tensor import Tensor, as_tensor, make_result
from medpatch.errors import ConfigError, DimensionError

IntOrSeq = Union[int, Sequence[int]]


def _per_axis(value: IntOrSeq, dims: int, what: str) -> Tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * dims
    value = tuple(int(v) for v in value)
    if len(value) != dims:
        raise DimensionError(f"{what}: expected {dims} values, got {len(value)}")
    return value


def _spatial_axes(dims: int) -> Tuple[int, ...]:
    return tuple(range(2, 2 + dims))


def _windows(x: np.ndarray, kernel: Tuple[int, ...], stride: Tuple[int, ...]) -> np.ndarray:
    """Strided view [B, C, P1..Pd, K1..Kd] of every kernel-sized window."""
    dims = len(kernel)
    view = sliding_window_view(x, kernel, axis=_spatial_axes(dims))
    return view[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]


def _correlate(x: np.ndarray, w: np.ndarray, stride: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray]:
    """out[b, o, p] = sum_{c, k} x[b, c, p*s + k] * w[o, c, k]"""
    dims = w.ndim - 2
    win = _windows(x, w.shape[2:], stride)
    out = np.tensordot(win, w, axes=([1] + list(range(2 + dims, 2 + 2 * dims)), [1] + list(_spatial_axes(dims))))
    return np.moveaxis(out, -1, 1), win


def _scatter(g: np.ndarray, w: np.ndarray, stride: Tuple[int, ...], out_spatial: Tuple[int, ...]) -> np.ndarray:
    """Adjoint of _correlate with respect to x: out[b, c, p*s + k] += sum_o g[b, o, p] * w[o, c, k]"""
    dims = w.ndim - 2
    kernel = w.shape[2:]
    positions = g.shape[2:]
    out = np.zeros((g.shape[0], w.shape[1]) + tuple(out_spatial), dtype=np.result_type(g, w))
    for offset in itertools.product(*(range(k) for k in kernel)):
        contrib = np.tensordot(g, w[(slice(None), slice(None)) + offset], axes=([1], [0]))
        contrib = np.moveaxis(contrib, -1, 1)
        region = tuple(slice(o, o + s * (p - 1) + 1, s) for o, s, p in zip(offset, stride, positions))
        out[(slice(None), slice(None)) + region] += contrib
    return out


def _check_conv_inputs(x: Tensor, w: Tensor, channel_axis: int, what: str) -> int:
    dims = w.ndim - 2
    if dims not in (2, 3):
        raise DimensionError(f"{what}: weights must be [Cout, Cin, K...] with 2 or 3 spatial axes, got shape {w.shape}")
    if x.ndim != dims + 2:
        raise DimensionError(f"{what}: input must have {dims + 2} axes [B, C, S...], got shape {x.shape}")
    if x.shape[1] != w.shape[channel_axis]:
        raise DimensionError(f"{what}: axis 1 (channels) of input is {x.shape[1]}, weights expect {w.shape[channel_axis]}")
    return dims


def conv_nd(x, w, b=None, stride: IntOrSeq = 1, padding: IntOrSeq = 0) -> Tensor:
    """Cross-correlation of x [B, Cin, S...] with w [Cout, Cin, K...], plus optional bias [Cout].

    Output extent per axis: floor((S + 2*pad - K) / stride) + 1.
    """
    x, w = as_tensor(x), as_tensor(w)
    dims = _check_conv_inputs(x, w, 1, "conv_nd")
    stride = _per_axis(stride, dims, "stride")
    padding = _per_axis(padding, dims, "padding")
    if any(s < 1 for s in stride):
        raise ConfigError(f"conv_nd: stride must be >= 1, got {stride}")
    kernel = w.shape[2:]
    xp = np.pad(x.data, [(0, 0), (0, 0)] + [(p, p) for p in padding]) if any(padding) else x.data
    for i, (extent, k) in enumerate(zip(xp.shape[2:], kernel)):
        if k > extent:
            raise DimensionError(f"conv_nd: axis {2 + i}: kernel {k} larger than padded input extent {extent}")

    out, win = _correlate(xp, w.data, stride)
    inputs = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[0],):
            raise DimensionError(f"conv_nd: bias must have shape ({w.shape[0]},), got {b.shape}")
        out = out + b.data.reshape((1, -1) + (1,) * dims)
        inputs.append(b)

    def grad(g):
        gw = np.tensordot(g, win, axes=([0] + list(_spatial_axes(dims)), [0] + list(_spatial_axes(dims))))
        gx = None
        if x.requires_grad:
            gxp = _scatter(g, w.data, stride, xp.shape[2:])
            gx = gxp[(slice(None), slice(None)) + tuple(slice(p, p + s) for p, s in zip(padding, x.shape[2:]))]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0,) + _spatial_axes(dims)))
        return grads

    return make_result("conv_nd", out, inputs, grad)


def transpose_conv_nd(x, w, b=None, stride: IntOrSeq = 1) -> Tensor:
    """Transpose convolution, the adjoint of conv_nd(., w, stride) without padding.

    x is [B, Cin, S...] and w is [Cin, Cout, K...], the same array a conv_nd
    mapping Cout -> Cin channels would use. Output extent: (S - 1) * stride + K.
    """
    x, w = as_tensor(x), as_tensor(w)
    dims = _check_conv_inputs(x, w, 0, "transpose_conv_nd")
    stride = _per_axis(stride, dims, "stride")
    if any(s < 1 for s in stride):
        raise ConfigError(f"transpose_conv_nd: stride must be >= 1, got {stride}")
    kernel = w.shape[2:]
    out_spatial = tuple((s_in - 1) * s + k for s_in, s, k in zip(x.shape[2:], stride, kernel))
    out = _scatter(x.data, w.data, stride, out_spatial)
    inputs = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[1],):
            raise DimensionError(f"transpose_conv_nd: bias must have shape ({w.shape[1]},), got {b.shape}")
        out = out + b.data.reshape((1, -1) + (1,) * dims)
        inputs.append(b)

    def grad(g):
        gx, win = _correlate(g, w.data, stride)
        gw = np.tensordot(x.data, win, axes=([0] + list(_spatial_axes(dims)), [0] + list(_spatial_axes(dims))))
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0,) + _spatial_axes(dims)))
        return grads

    return make_result("transpose_conv_nd", out, inputs, grad)


def pool_nd(x, kind: str = "max", window: IntOrSeq = 2, stride: Optional[IntOrSeq] = None) -> Tensor:
    """Max, average or global-average pooling over the spatial axes.

    Windows that do not fit at the trailing border are dropped (floor).
    """
    x = as_tensor(x)
    dims = x.ndim - 2
    if dims < 1:
        raise DimensionError(f"pool_nd: input must be [B, C, S...], got shape {x.shape}")
    spatial = _spatial_axes(dims)

    if kind == "global_average":
        count = int(np.prod(x.shape[2:]))
        out = x.data.mean(axis=spatial, keepdims=True)
        return make_result("global_average_pool", out, (x,),
                           lambda g: (np.broadcast_to(g / count, x.shape),))

    window = _per_axis(window, dims, "window")
    stride = window if stride is None else _per_axis(stride, dims, "stride")
    for i, (extent, k) in enumerate(zip(x.shape[2:], window)):
        if k > extent:
            raise DimensionError(f"pool_nd: axis {2 + i}: window {k} larger than input extent {extent}")
    win = _windows(x.data, window, stride)
    positions = win.shape[2:2 + dims]

    if kind == "max":
        flat = win.reshape(win.shape[:2 + dims] + (-1,))
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

        def grad(g):
            offsets = np.unravel_index(arg, window)
            grid = np.indices(positions)
            index = tuple(grid[i] * stride[i] + offsets[i] for i in range(dims))
            batch = np.arange(x.shape[0]).reshape((-1,) + (1,) * (dims + 1))
            chan = np.arange(x.shape[1]).reshape((1, -1) + (1,) * dims)
            gx = np.zeros_like(x.data)
            np.add.at(gx, (batch, chan) + index, g)
            return (gx,)

        return make_result("max_pool", out, (x,), grad)

    if kind == "average":
        count = int(np.prod(window))
        out = win.mean(axis=tuple(range(2 + dims, 2 + 2 * dims)))

        def grad(g):
            gx = np.zeros_like(x.data)
            for offset in itertools.product(*(range(k) for k in window)):
                region = tuple(slice(o, o + s * (p - 1) + 1, s) for o, s, p in zip(offset, stride, positions))
                gx[(slice(None), slice(None)) + region] += g / count
            return (gx,)

        return make_result("average_pool", out, (x,), grad)

    raise ConfigError(f"pool_nd: unknown kind '{kind}', expected max, average or global_average")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation(x, kind: str = "relu", alpha: float = 0.01, axis: int = 1) -> Tensor:
    """relu, leaky_relu (slope alpha), sigmoid, softmax (along axis) or none."""
    x = as_tensor(x)
    if kind in ("none", "linear", None):
        return x
    if kind == "relu":
        mask = x.data > 0
        return make_result("relu", x.data * mask, (x,), lambda g: (g * mask,))
    if kind == "leaky_relu":
        slope = np.where(x.data > 0, 1.0, alpha)
        return make_result("leaky_relu", x.data * slope, (x,), lambda g: (g * slope,))
    if kind == "sigmoid":
        y = _sigmoid(x.data)
        return make_result("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))
    if kind == "softmax":
        if not -x.ndim <= axis < x.ndim:
            raise DimensionError(f"softmax: axis {axis} out of range for shape {x.shape}")
        shifted = x.data - x.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)
        return make_result("softmax", y, (x,),
                           lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))
    raise ConfigError(f"unknown activation '{kind}', expected relu, leaky_relu, sigmoid, softmax or none")


def dense(x, w, b=None) -> Tensor:
    """Affine map x [B, F] @ w [F, O] + b [O]."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"dense: input [B, F] and weights [F, O] required, got {x.shape} and {w.shape}")
    out = x.data @ w.data
    inputs = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[1],):
            raise DimensionError(f"dense: bias must have shape ({w.shape[1]},), got {b.shape}")
        out = out + b.data
        inputs.append(b)

    def grad(g):
        grads = [g @ w.data.T, x.data.T @ g]
        if b is not None:
            grads.append(g.sum(axis=0))
        return grads

    return make_result("dense", out, inputs, grad)


def normalize(x, gamma, beta, axes: Tuple[int, ...], eps: float = 1e-5) -> Tensor:
    """(x - mean) / sqrt(var + eps) * gamma + beta, statistics over `axes`.

    Instance normalization reduces over the spatial axes, batch normalization
    over batch and spatial axes. gamma and beta are per channel [C].
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    shape = (1, -1) + (1,) * (x.ndim - 2)
    mu = x.data.mean(axis=axes, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    g_ = gamma.data.reshape(shape)
    out = x_hat * g_ + beta.data.reshape(shape)
    n = x.data.size // mu.size
    channel_axes = (0,) + tuple(range(2, x.ndim))

    def grad(g):
        d_hat = g * g_
        gx = inv_std / n * (n * d_hat - d_hat.sum(axis=axes, keepdims=True)
                            - x_hat * (d_hat * x_hat).sum(axis=axes, keepdims=True))
        return gx, (g * x_hat).sum(axis=channel_axes), g.sum(axis=channel_axes)

    return make_result("normalize", out, (x, gamma, beta), grad)
