"""
Training losses. Each takes the model output (after its final activation)
and the raw batch targets, and returns a scalar Tensor recorded on the
active tape.

Targets: class-index maps (B, *S) for segmentation, class indices (B,)
for classification, values (B,) for regression.
"""

from typing import Any, Dict, Optional

import numpy as np

from medpatch.core import Tensor, ops
from medpatch.decorators import loss
from medpatch.errors import ConfigError, DimensionError
from medpatch.registry import lookup

DICE_SMOOTHING = 1e-7
LOG_EPSILON = 1e-12


def one_hot(indices: np.ndarray, classes: int) -> np.ndarray:
    """(B, *S) integer indices -> (B, classes, *S) float indicators."""
    indices = np.asarray(indices).astype(np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= classes):
        raise DimensionError(f"target indices span [{indices.min()}, {indices.max()}], model has {classes} classes")
    out = np.zeros((indices.shape[0], classes) + indices.shape[1:])
    np.put_along_axis(out, indices[:, np.newaxis], 1.0, axis=1)
    return out


def _segmentation_target(pred: Tensor, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target)
    if target.shape == pred.shape:
        return target.astype(np.float64)
    if target.shape != (pred.shape[0],) + pred.shape[2:]:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} do not match")
    return one_hot(target, pred.shape[1])


def _overlap_terms(pred: Tensor, target: np.ndarray):
    reduce = (0,) + tuple(range(2, pred.ndim))
    t = _segmentation_target(pred, target)
    tp = ops.sum(pred * t, axis=reduce)
    fp = ops.sum(pred * (1.0 - t), axis=reduce)
    fn = ops.sum((1.0 - pred) * t, axis=reduce)
    return tp, fp, fn


@loss("dice")
def dice(pred: Tensor, target: np.ndarray, smoothing: float = DICE_SMOOTHING) -> Tensor:
    """1 - mean over classes of (2 TP + eps) / (2 TP + FP + FN + eps), sums over batch and space."""
    tp, fp, fn = _overlap_terms(pred, target)
    score = (2.0 * tp + smoothing) / (2.0 * tp + fp + fn + smoothing)
    return 1.0 - ops.mean(score)


@loss("tversky")
def tversky(pred: Tensor, target: np.ndarray, alpha: float = 0.5, beta: float = 0.5,
            smoothing: float = DICE_SMOOTHING) -> Tensor:
    """Dice generalised with separate false-positive (alpha) and false-negative (beta) weights."""
    tp, fp, fn = _overlap_terms(pred, target)
    score = (tp + smoothing) / (tp + alpha * fp + beta * fn + smoothing)
    return 1.0 - ops.mean(score)


@loss("mse")
def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        if target.size != pred.size or target.shape[:1] != pred.shape[:1]:
            raise DimensionError(f"prediction {pred.shape} and target {target.shape} do not match")
        target = target.reshape(pred.shape)
    diff = pred - target
    return ops.mean(diff * diff)


@loss("cross_entropy")
def cross_entropy(pred: Tensor, target: np.ndarray) -> Tensor:
    """Categorical cross-entropy of class probabilities, averaged over samples."""
    target = np.asarray(target)
    if target.shape == pred.shape:
        t = target.astype(np.float64)
    elif target.shape == (pred.shape[0],) + pred.shape[2:]:
        t = one_hot(target, pred.shape[1])
    else:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} do not match")
    log_p = ops.log(ops.clip(pred, LOG_EPSILON, 1.0))
    per_sample = ops.sum(log_p * t, axis=1)
    return -ops.mean(per_sample)


dice.tasks = ("segmentation",)
tversky.tasks = ("segmentation",)
mse.tasks = ("regression",)
cross_entropy.tasks = ("classification",)


def compute_loss(pred: Tensor, target: np.ndarray, kind: str, params: Optional[Dict[str, Any]] = None,
                 plugins_path: Optional[str] = None) -> Tensor:
    res = lookup("loss", kind, plugins_path)
    if not res:
        raise ConfigError(f"unknown loss '{kind}': {res.error}")
    fn = res.unwrapped
    return fn(pred, target, **(params or {}))
