import math

from medpatch.errors import ConfigError


def schedule_lr(base_lr: float, scheduler, epoch: int) -> float:
    """
    Learning rate for an epoch (0-based).

    scheduler is a mapping with `type` constant|step; step also reads
    `gamma` and `step_size`: base_lr * gamma ** floor(epoch / step_size).
    """
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    kind = scheduler["type"]
    if kind == "constant":
        return base_lr
    if kind == "step":
        gamma, period = scheduler["gamma"], scheduler["step_size"]
        if not gamma > 0:
            raise ConfigError(f"scheduler gamma must be > 0, got {gamma}")
        if period < 1:
            raise ConfigError(f"scheduler step_size must be >= 1, got {period}")
        return base_lr * gamma ** math.floor(epoch / period)
    raise ConfigError(f"unknown scheduler type '{kind}'")
