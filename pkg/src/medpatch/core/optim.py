from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from medpatch.core.tensor import Tensor
from medpatch.errors import ConfigError, ContractError


class ParamStore:
    """
    Named trainable parameters with their gradient and momentum buffers,
    plus non-trainable buffers (batch-norm running statistics).
    """

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._velocity: Dict[str, np.ndarray] = {}
        self._buffers: Dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params or name in self._buffers:
            raise ContractError(f"parameter name '{name}' is already registered")
        t = Tensor(value, requires_grad=True, name=name)
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
        self._velocity[name] = np.zeros_like(t.data)
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> None:
        if name in self._params or name in self._buffers:
            raise ContractError(f"buffer name '{name}' is already registered")
        self._buffers[name] = np.array(value, dtype=np.float64)

    def buffer(self, name: str) -> np.ndarray:
        return self._buffers[name]

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name][...] = value

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._params.items())

    def velocity(self, name: str) -> np.ndarray:
        return self._velocity[name]

    def zero_grad(self) -> None:
        for p in self._params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            else:
                p.grad[...] = 0

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def state(self) -> Dict[str, np.ndarray]:
        """Parameters and buffers by name; buffers are prefixed with 'buffer:'."""
        state = {name: p.data for name, p in self._params.items()}
        state.update({f"buffer:{name}": b for name, b in self._buffers.items()})
        return state

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        expected = set(self.state())
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        if missing or unexpected:
            raise ContractError(f"state does not match the model: missing {missing}, unexpected {unexpected}")
        for name, value in state.items():
            target = self._buffers[name[7:]] if name.startswith("buffer:") else self._params[name].data
            if target.shape != value.shape:
                raise ContractError(f"state entry '{name}' has shape {value.shape}, model expects {target.shape}")
            target[...] = value


def sgd_step(params: ParamStore, lr: float, momentum: float = 0.9, weight_decay: float = 0.0) -> None:
    """v <- momentum * v + (g + weight_decay * p); p <- p - lr * v; then g <- 0."""
    if not lr > 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
    if weight_decay < 0:
        raise ConfigError(f"weight decay must be >= 0, got {weight_decay}")
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad + weight_decay * p.data if weight_decay else p.grad
        v = params.velocity(name)
        v *= momentum
        v += g
        p.data -= lr * v
        p.grad[...] = 0


def clip_grad_norm(params: ParamStore, max_norm: Optional[float]) -> float:
    """Rescale all gradients so their global L2 norm is at most max_norm.

    Returns:
        the norm before clipping
    """
    total = float(np.sqrt(sum(float((p.grad * p.grad).sum()) for _, p in params.items() if p.grad is not None)))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for _, p in params.items():
            if p.grad is not None:
                p.grad *= scale
    return total
