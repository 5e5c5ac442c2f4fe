"""
Multi-resolution slide pyramids.

Level 0 is the full-resolution image; level L+1 is the box-filter
downsample of level L by `factor`, with extents ceil(n / factor) (edge
blocks average the pixels they have). Regions are read tile by tile:
only tiles intersecting the region are touched, and the reads are
counted in TileStats.

On disk a pyramid is a bundle directory:

    <name>.pyramid/
        pyramid.yaml      {format_version, factor, tile, levels: [{file, extents}]}
        level_0.mha
        level_1.mha
        ...
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import yaml

from medpatch.errors import ConfigError, DimensionError, FormatError
from medpatch.imaging.image import Image, ImageGeometry
from medpatch.imaging.io import read_image, write_image
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

BUNDLE_SUFFIX = ".pyramid"
INDEX_NAME = "pyramid.yaml"
BUNDLE_FORMAT_VERSION = 1


def box_downsample(values: np.ndarray, factor: int) -> np.ndarray:
    """(C, H, W) -> (C, ceil(H / f), ceil(W / f)) block means."""
    out = values.astype(np.float64)
    counts = np.ones(values.shape[1:], dtype=np.float64)
    for axis in (1, 2):
        starts = np.arange(0, values.shape[axis], factor)
        out = np.add.reduceat(out, starts, axis=axis)
        counts = np.add.reduceat(counts, starts, axis=axis - 1)
    return out / counts


@dataclass
class TileStats:
    reads: int = 0
    tiles_touched: int = 0
    max_tiles_per_read: int = 0

    def record(self, tiles: int) -> None:
        self.reads += 1
        self.tiles_touched += tiles
        self.max_tiles_per_read = max(self.max_tiles_per_read, tiles)


@dataclass
class TiledImage:
    levels: List[Image]
    factor: int
    tile: int
    stats: TileStats = field(default_factory=TileStats)

    def __post_init__(self):
        if not self.levels:
            raise ConfigError("a pyramid needs at least one level")
        if self.factor < 2:
            raise ConfigError(f"pyramid factor must be >= 2, got {self.factor}")
        if self.tile < 1:
            raise ConfigError(f"tile size must be >= 1, got {self.tile}")

    def __len__(self) -> int:
        return len(self.levels)

    def extents(self, level: int = 0) -> Tuple[int, ...]:
        return self.level(level).extents

    def level(self, level: int) -> Image:
        if not 0 <= level < len(self.levels):
            raise DimensionError(f"pyramid has levels 0..{len(self.levels) - 1}, level {level} requested")
        return self.levels[level]

    def scale(self, level: int) -> int:
        """Level-0 pixels per level pixel, along each axis."""
        return self.factor ** level

    def tiles_for(self, level: int, corner: Sequence[int], size: Sequence[int]) -> List[Tuple[int, int]]:
        (y, x), (h, w) = corner, size
        rows = range(y // self.tile, (y + h - 1) // self.tile + 1)
        cols = range(x // self.tile, (x + w - 1) // self.tile + 1)
        return [(r, c) for r in rows for c in cols]

    def read_region(self, level: int, corner: Sequence[int], size: Sequence[int]) -> np.ndarray:
        """(C, h, w) copy of the region at `corner` = (y, x), assembled tile by tile."""
        image = self.level(level)
        (y, x), (h, w) = corner, size
        height, width = image.extents
        if h < 1 or w < 1 or y < 0 or x < 0 or y + h > height or x + w > width:
            raise DimensionError(f"region {tuple(corner)}+{tuple(size)} outside level {level} extents {image.extents}")
        out = np.empty((image.channels, h, w), dtype=image.values.dtype)
        tiles = self.tiles_for(level, corner, size)
        for r, c in tiles:
            ty, tx = r * self.tile, c * self.tile
            block = image.values[:, ty:ty + self.tile, tx:tx + self.tile]
            y0, y1 = max(y, ty), min(y + h, ty + block.shape[1])
            x0, x1 = max(x, tx), min(x + w, tx + block.shape[2])
            out[:, y0 - y:y1 - y, x0 - x:x1 - x] = block[:, y0 - ty:y1 - ty, x0 - tx:x1 - tx]
        self.stats.record(len(tiles))
        return out


def build_tiled_pyramid(image: Image, levels: int, factor: int = 2, tile: int = 256) -> TiledImage:
    if factor < 2:
        raise ConfigError(f"pyramid factor must be >= 2, got {factor}")
    if levels < 1:
        raise ConfigError(f"pyramid needs at least one level, got {levels}")
    if image.dims != 2:
        raise DimensionError(f"pyramids are built from 2D images, got {image.dims}D")
    if image.channels != 3:
        logger.warning("building a pyramid from a %d-channel image, tissue masking expects RGB", image.channels)
    out = [image]
    for level in range(1, levels):
        previous = out[-1]
        if min(previous.extents) == 1:
            logger.info("stopping the pyramid at level %d, extents %s", level - 1, previous.extents)
            break
        spacing = tuple(s * factor for s in previous.spacing)
        origin = tuple(o + 0.5 * (sp - s) for o, s, sp in zip(previous.origin, previous.spacing, spacing))
        out.append(Image(box_downsample(previous.values, factor), ImageGeometry(spacing, origin)))
    return TiledImage(out, factor, tile)


def write_pyramid(tiled: TiledImage, path) -> Result[Path]:
    """Write a bundle directory; a missing .pyramid suffix is added."""
    path = Path(path)
    if path.suffix != BUNDLE_SUFFIX:
        path = path.with_name(path.name + BUNDLE_SUFFIX)
    entries = []
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        return Result.error(f"cannot create pyramid bundle {path}", e)
    for index, level in enumerate(tiled.levels):
        name = f"level_{index}.mha"
        res = write_image(level, path / name)
        if not res:
            return Result.error(f"could not write pyramid level {index}", res)
        entries.append({"file": name, "extents": list(level.extents)})
    index_doc = {"format_version": BUNDLE_FORMAT_VERSION, "factor": tiled.factor, "tile": tiled.tile,
                 "levels": entries}
    try:
        (path / INDEX_NAME).write_text(yaml.safe_dump(index_doc, sort_keys=False), encoding="utf-8")
    except OSError as e:
        return Result.error(f"could not write {path / INDEX_NAME}", e)
    return Ok(path)


def read_pyramid(path) -> Result[TiledImage]:
    path = Path(path)
    try:
        index_doc = yaml.safe_load((path / INDEX_NAME).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        return Result.error(f"could not read pyramid index in {path}", e)
    if not isinstance(index_doc, dict) or not isinstance(index_doc.get("levels"), list):
        return Result.error(f"{path / INDEX_NAME}: no 'levels' list")
    if index_doc.get("format_version") != BUNDLE_FORMAT_VERSION:
        return Result.error(f"{path}", FormatError(
            f"pyramid bundle version {index_doc.get('format_version')} is not supported"))

    levels = []
    for index, entry in enumerate(index_doc["levels"]):
        res = read_image(path / entry["file"])
        if not res:
            return Result.error(f"could not read pyramid level {index}", res)
        image = res.unwrapped
        if list(image.extents) != list(entry["extents"]):
            return Result.error(f"{path}", DimensionError(
                f"level {index} has extents {image.extents}, index says {entry['extents']}"))
        levels.append(image)
    try:
        tiled = TiledImage(levels, int(index_doc["factor"]), int(index_doc["tile"]))
        for index in range(1, len(tiled)):
            wanted = expected_extents(tiled.extents(0), tiled.factor, index)
            if tiled.extents(index) != wanted:
                raise DimensionError(f"level {index} has extents {tiled.extents(index)}, expected {wanted}")
        return Ok(tiled)
    except (KeyError, ConfigError, DimensionError) as e:
        return Result.error(f"invalid pyramid index in {path}", e)


def expected_extents(base: Sequence[int], factor: int, level: int) -> Tuple[int, ...]:
    extents = tuple(base)
    for _ in range(level):
        extents = tuple(math.ceil(n / factor) for n in extents)
    return extents
