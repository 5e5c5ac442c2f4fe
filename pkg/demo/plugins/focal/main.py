"""
Focal loss as a plugin:

    medpatch --plugins-path demo/plugins train ... -c config-with-focal.yaml

with `loss: focal` and optionally `loss_params: {gamma: 2.0}`.
"""

import numpy as np

from medpatch.core import Tensor, ops
from medpatch.decorators import loss
from medpatch.training.losses import LOG_EPSILON, one_hot


@loss("focal")
def focal(pred: Tensor, target: np.ndarray, gamma: float = 2.0) -> Tensor:
    """Cross-entropy with every voxel weighted by (1 - p) ** gamma, averaged over batch and space."""
    target = np.asarray(target)
    t = target.astype(np.float64) if target.shape == pred.shape else one_hot(target, pred.shape[1])
    p = ops.clip(pred, LOG_EPSILON, 1.0)
    per_voxel = ops.sum((1.0 - p) ** gamma * ops.log(p) * t, axis=1)
    return -ops.mean(per_voxel)


focal.tasks = ("segmentation",)
