"""
Synthetic datasets with labels known by construction.

    ellipses     segmentation: bright ellipses on a noisy background, mask = ellipse
    regression   smooth random textures, target = mean intensity
    slide        RGB slide, dark tissue blob on near-white glass, mask = blob

Each generator writes its images under `directory` plus a manifest.csv
whose paths are relative to the manifest.
"""

import csv
import logging
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from medpatch.errors import ConfigError
from medpatch.imaging.image import Image
from medpatch.imaging.io import write_image
from medpatch.imaging.manifest import CHANNEL_PREFIX, ID_COLUMN, LABEL_COLUMN
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
KINDS = ("ellipses", "regression", "slide")


def ellipse_mask(extents: Sequence[int], center: Sequence[float], radii: Sequence[float],
                 angle: float = 0.0) -> np.ndarray:
    """Boolean ellipse (ellipsoid in 3D, axis-aligned); `angle` rotates the first two axes."""
    grids = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in extents], indexing="ij")
    offsets = [g - c for g, c in zip(grids, center)]
    if len(offsets) >= 2 and angle:
        cos, sin = np.cos(angle), np.sin(angle)
        offsets[0], offsets[1] = cos * offsets[0] + sin * offsets[1], -sin * offsets[0] + cos * offsets[1]
    return sum((o / r) ** 2 for o, r in zip(offsets, radii)) <= 1.0


def _write_manifest(directory: Path, rows: List[Tuple[str, str, str]]) -> Result[Path]:
    path = directory / MANIFEST_NAME
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow([ID_COLUMN, f"{CHANNEL_PREFIX}0", LABEL_COLUMN])
            writer.writerows(rows)
    except OSError as e:
        return Result.error(f"could not write {path}", e)
    logger.info("wrote %s with %d subjects", path, len(rows))
    return Ok(path)


def _write(image: Image, directory: Path, relative: str) -> Result[str]:
    res = write_image(image, directory / relative)
    if not res:
        return res
    return Ok(relative)


def _prepare(directory) -> Result[Path]:
    directory = Path(directory)
    try:
        (directory / "images").mkdir(parents=True, exist_ok=True)
        (directory / "labels").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        return Result.error(f"cannot create {directory}", e)
    return Ok(directory)


def make_ellipse_set(directory, count: int, extents: Sequence[int] = (64, 64), seed: int = 0,
                     noise: float = 0.1) -> Result[Path]:
    if count < 1:
        return Result.error(ConfigError(f"count must be >= 1, got {count}"))
    res = _prepare(directory)
    if not res:
        return res
    directory = res.unwrapped
    rng = np.random.default_rng(seed)
    extents = tuple(int(n) for n in extents)
    rows = []
    for index in range(count):
        sid = f"subject_{index:04d}"
        center = [rng.uniform(0.3, 0.7) * n for n in extents]
        radii = [rng.uniform(0.12, 0.3) * n for n in extents]
        mask = ellipse_mask(extents, center, radii, rng.uniform(0, np.pi))
        values = 0.2 + 0.6 * mask + noise * rng.standard_normal(extents)
        image = _write(Image.from_array(values), directory, f"images/{sid}.mha")
        label = _write(Image.from_array(mask.astype(np.uint8)), directory, f"labels/{sid}_mask.mha")
        for res in (image, label):
            if not res:
                return res
        rows.append((sid, image.unwrapped, label.unwrapped))
    return _write_manifest(directory, rows)


def make_regression_set(directory, count: int, extents: Sequence[int] = (32, 32), seed: int = 0,
                        smoothing: float = 2.0) -> Result[Path]:
    if count < 1:
        return Result.error(ConfigError(f"count must be >= 1, got {count}"))
    res = _prepare(directory)
    if not res:
        return res
    directory = res.unwrapped
    rng = np.random.default_rng(seed)
    extents = tuple(int(n) for n in extents)
    rows = []
    for index in range(count):
        sid = f"subject_{index:04d}"
        texture = ndimage.gaussian_filter(rng.standard_normal(extents), smoothing, mode="wrap")
        values = rng.uniform(0.0, 1.0) + 0.2 * texture
        res = _write(Image.from_array(values), directory, f"images/{sid}.mha")
        if not res:
            return res
        rows.append((sid, res.unwrapped, repr(float(values.mean()))))
    return _write_manifest(directory, rows)


def make_slide(directory, extents: Sequence[int] = (512, 512), seed: int = 0, count: int = 1) -> Result[Path]:
    """RGB slides (.ppm) with a dark blob; the blob mask is the label."""
    res = _prepare(directory)
    if not res:
        return res
    directory = res.unwrapped
    rng = np.random.default_rng(seed)
    extents = tuple(int(n) for n in extents)
    if len(extents) != 2:
        return Result.error(ConfigError(f"slides are 2D, got extents {extents}"))
    rows = []
    for index in range(count):
        sid = f"slide_{index:04d}"
        center = [rng.uniform(0.35, 0.65) * n for n in extents]
        radii = [rng.uniform(0.15, 0.3) * n for n in extents]
        blob = ellipse_mask(extents, center, radii, rng.uniform(0, np.pi))
        glass = np.array([245.0, 244.0, 247.0])[:, None, None]
        stain = np.array([130.0, 70.0, 150.0])[:, None, None]
        values = np.where(blob, stain, glass) + 4.0 * rng.standard_normal((3,) + extents)
        rgb = np.clip(np.rint(values), 0, 255).astype(np.uint8)
        image = _write(Image(rgb), directory, f"images/{sid}.ppm")
        label = _write(Image.from_array(blob.astype(np.uint8)), directory, f"labels/{sid}_mask.mha")
        for res in (image, label):
            if not res:
                return res
        rows.append((sid, image.unwrapped, label.unwrapped))
    return _write_manifest(directory, rows)


def make_dataset(kind: str, directory, count: int, extents: Sequence[int], seed: int = 0) -> Result[Path]:
    if kind == "ellipses":
        return make_ellipse_set(directory, count, extents, seed)
    if kind == "regression":
        return make_regression_set(directory, count, extents, seed)
    if kind == "slide":
        return make_slide(directory, extents, seed, count)
    return Result.error(ConfigError(f"synthetic dataset kind must be one of {KINDS}, got '{kind}'"))
