"""
Central finite-difference gradient checks for the kernels.

    err = check_gradients(lambda: ops.sum(nn.conv_nd(x, w)), [x, w])
    assert err < 1e-4
"""

from typing import Callable, List, Sequence

import numpy as np

from medpatch.core.tensor import Tape, Tensor, backward, no_tape


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, eps: float = 1e-5) -> np.ndarray:
    tensor.data = np.ascontiguousarray(tensor.data)
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    with no_tape():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = fn().item()
            flat[i] = original - eps
            minus = fn().item()
            flat[i] = original
            out[i] = (plus - minus) / (2 * eps)
    return grad


def analytic_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> List[np.ndarray]:
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        loss = fn()
    backward(tape, loss)
    return [np.array(t.grad, copy=True) for t in tensors]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Largest relative error between backward() and central differences over `tensors`."""
    analytic = analytic_gradients(fn, tensors)
    return max(relative_error(a, numerical_gradient(fn, t, eps)) for a, t in zip(analytic, tensors))
