"""
Figures written next to the data: training curves and augmentation previews.
Rendered headless with the Agg backend.
"""

import logging
import math
from pathlib import Path
from typing import Mapping, Sequence, Tuple

import numpy as np

from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

DPI = 100


def _ensure_agg_backend():
    """Ensure matplotlib uses Agg backend for headless rendering."""
    import matplotlib
    if matplotlib.rcParams['backend'].lower() != 'agg':
        matplotlib.use('Agg')


def display_slice(values: np.ndarray) -> np.ndarray:
    """2D view of a (C, *S) array: RGB for 3 channels in 2D, else the first channel, middle plane for 3D."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 3 and values.shape[0] == 3:
        return np.moveaxis(values, 0, -1)
    plane = values[0]
    if plane.ndim == 3:
        plane = plane[plane.shape[0] // 2]
    return plane


def _save(fig, path: Path) -> Result[Path]:
    import matplotlib.pyplot as plt

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=DPI)
    except (OSError, ValueError) as e:
        return Result.error(f"could not write figure {path}", e)
    finally:
        plt.close(fig)
    return Ok(path)


def plot_training_curves(rows: Sequence[Mapping[str, float]], path) -> Result[Path]:
    """Loss and metric per epoch, from logs.csv rows."""
    _ensure_agg_backend()
    import matplotlib.pyplot as plt

    epochs = [r["epoch"] for r in rows]
    fig, (loss_ax, metric_ax) = plt.subplots(1, 2, figsize=(8, 3), dpi=DPI)
    loss_ax.plot(epochs, [r["train_loss"] for r in rows], label="train")
    loss_ax.plot(epochs, [r["val_loss"] for r in rows], label="validation")
    loss_ax.set_xlabel("epoch")
    loss_ax.set_ylabel("loss")
    loss_ax.legend()
    loss_ax.grid(True, alpha=0.3)
    metric_ax.plot(epochs, [r["val_metric"] for r in rows], color="tab:green")
    metric_ax.set_xlabel("epoch")
    metric_ax.set_ylabel("validation metric")
    metric_ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_preview(panels: Sequence[Tuple[str, np.ndarray]], path, columns: int = 4) -> Result[Path]:
    """Grid of titled images, e.g. an input and its augmented versions."""
    if not panels:
        return Result.error("nothing to preview")
    _ensure_agg_backend()
    import matplotlib.pyplot as plt

    columns = min(columns, len(panels))
    rows = math.ceil(len(panels) / columns)
    fig, axes = plt.subplots(rows, columns, figsize=(3 * columns, 3 * rows), dpi=DPI, squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for ax, (title, values) in zip(axes.ravel(), panels):
        view = display_slice(values)
        if view.ndim == 3:
            lo, hi = float(view.min()), float(view.max())
            view = (view - lo) / (hi - lo) if hi > lo else np.zeros_like(view)
            ax.imshow(view)
        else:
            ax.imshow(view, cmap="gray")
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    return _save(fig, Path(path))
