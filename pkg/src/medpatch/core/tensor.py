"""
Tensor and Tape: n-dimensional arrays with reverse-mode differentiation.

Every differentiable kernel computes its output with numpy and, when a Tape
is active and one of its inputs requires a gradient, records a Node holding
the inputs, the output and a closure mapping the output gradient to the
input gradients. backward() walks the recorded nodes in reverse.

    with Tape() as tape:
        loss = ops.sum(nn.conv_nd(x, w))
    backward(tape, loss)
    w.grad
"""

import threading
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from medpatch.errors import ConfigError, ContractError, DimensionError

_DTYPES = {"float64": np.float64, "float32": np.float32}
_default_dtype = np.float64


def set_default_dtype(name: str) -> None:
    """Select the scalar type of new tensors: 'float64' (default) or 'float32'."""
    global _default_dtype
    if name not in _DTYPES:
        raise ConfigError(f"unsupported dtype '{name}', expected one of {sorted(_DTYPES)}")
    _default_dtype = _DTYPES[name]


def get_default_dtype():
    return _default_dtype


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")
    # numpy defers mixed ndarray/Tensor arithmetic to Tensor's reflected operators
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype or _default_dtype)
        if any(extent < 1 for extent in arr.shape):
            raise DimensionError(f"tensor extents must all be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"


@dataclass
class Node:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


_local = threading.local()


def _tape_stack() -> List[Optional["Tape"]]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


class Tape:
    """Ordered record of the differentiable operations executed while active.

    Tapes are per thread. A tape can be consumed by backward() exactly once.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _tape_stack().pop()
        return False

    @property
    def consumed(self) -> bool:
        return self._consumed

    @staticmethod
    def current() -> Optional["Tape"]:
        stack = _tape_stack()
        return stack[-1] if stack else None

    def record(self, node: Node) -> None:
        if self._consumed:
            raise ContractError("tape was already consumed by backward(); run the forward pass again on a new Tape")
        self.nodes.append(node)


class no_tape:
    """Context manager suspending recording, e.g. for validation forwards inside a training step."""

    def __enter__(self):
        _tape_stack().append(None)
        return self

    def __exit__(self, *exc) -> bool:
        _tape_stack().pop()
        return False


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_result(op: str, data: np.ndarray, inputs: Sequence[Tensor],
                backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """Wrap a kernel output and record it on the active tape when any input needs a gradient."""
    out = Tensor._wrap(data)
    tape = Tape.current()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(Node(op, tuple(inputs), out, backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back to the shape of the operand."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(tape: Tape, loss: Tensor, params=None) -> None:
    """Accumulate dLoss/dT into T.grad for every tensor on the tape that requires it.

    Args:
        tape: tape recorded during the forward pass, consumed by this call
        loss: single-element tensor produced on the tape
        params: optional ParamStore; its parameters not reached by the loss keep a zero gradient
    """
    if tape.consumed:
        raise ContractError("stale tape: backward() was already called on it; re-run the forward pass")
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")

    produced = {id(node.output) for node in tape.nodes}
    if id(loss) not in produced:
        raise ContractError("loss was not computed on this tape")

    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, input_grads):
            if gi is None or not t.requires_grad:
                continue
            gi = _unbroadcast(np.asarray(gi), t.shape)
            key = id(t)
            grads[key] = grads[key] + gi if key in grads else gi
            if key not in produced:
                leaves[key] = t

    for key, t in leaves.items():
        g = grads.get(key)
        if g is None:
            continue
        if t.grad is None:
            t.grad = np.array(g, dtype=t.data.dtype, copy=True)
        else:
            t.grad += g

    # leaves the loss never reached still get a defined (zero) gradient
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and id(t) not in produced and t.grad is None:
                t.grad = np.zeros_like(t.data)
    if params is not None:
        for _, p in params.items():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)

    tape._consumed = True
