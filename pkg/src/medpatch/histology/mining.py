"""
Pseudo-grid patch mining.

Candidates are the level-0 grid corners 0, stride, 2 stride, ... with
stride = max(1, floor(patch * (1 - overlap))) and the whole patch inside
the slide. A candidate is kept when the tissue fraction of its footprint
on the mask level is at least min_tissue_fraction. Coordinates are in
row-major order.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Sequence, Tuple, Union

import numpy as np

from medpatch.errors import ConfigError, ParseError
from medpatch.histology.tissue import TissueMask
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("x", "y", "tissue_fraction")


@dataclass(frozen=True)
class Coordinate:
    x: int
    y: int
    tissue_fraction: float


@dataclass
class CoordinateList:
    patch_size: Tuple[int, int]
    coordinates: List[Coordinate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.coordinates)

    def __iter__(self) -> Iterator[Coordinate]:
        return iter(self.coordinates)

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows((c.x, c.y, c.tissue_fraction) for c in self.coordinates)
        return buffer.getvalue()

    def to_csv(self, path) -> Result[Path]:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_csv_text(), encoding="utf-8")
        except OSError as e:
            return Result.error(f"could not write coordinate list {path}", e)
        return Ok(path)


def parse_coordinates(text: str, patch_size: Tuple[int, int]) -> CoordinateList:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ParseError(f"coordinate list header must be {','.join(CSV_COLUMNS)}", line=1)
    out = CoordinateList(patch_size)
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            x, y, fraction = row
            out.coordinates.append(Coordinate(int(x), int(y), float(fraction)))
        except ValueError as e:
            raise ParseError(f"malformed coordinate row {row}: {e}", line=line) from e
    return out


def read_coordinates(path, patch_size: Tuple[int, int]) -> Result[CoordinateList]:
    try:
        return Ok(parse_coordinates(Path(path).read_text(encoding="utf-8"), patch_size))
    except OSError as e:
        return Result.error(f"could not read coordinate list {path}", e)
    except ParseError as e:
        return Result.error(f"invalid coordinate list {path}", e)


def _pair(value: Union[int, Sequence[int]]) -> Tuple[int, int]:
    if isinstance(value, int):
        return value, value
    h, w = value
    return int(h), int(w)


def grid_corners(extent: int, patch: int, overlap: float) -> List[int]:
    stride = max(1, int(np.floor(patch * (1 - overlap))))
    return list(range(0, extent - patch + 1, stride))


def mine_patches(mask: TissueMask, patch_size, overlap: float = 0.0,
                 min_tissue_fraction: float = 0.5) -> CoordinateList:
    if not 0 <= overlap < 1:
        raise ConfigError(f"overlap must be in [0, 1), got {overlap}")
    if not 0 <= min_tissue_fraction <= 1:
        raise ConfigError(f"min_tissue_fraction must be in [0, 1], got {min_tissue_fraction}")
    ph, pw = _pair(patch_size)
    if ph < 1 or pw < 1:
        raise ConfigError(f"patch size must be positive, got {(ph, pw)}")
    out = CoordinateList((ph, pw))
    if not mask.mask.any():
        logger.info("empty tissue mask, no patches mined")
        return out

    integral = np.pad(mask.mask.astype(np.int64).cumsum(0).cumsum(1), ((1, 0), (1, 0)))
    height, width = mask.base_extents
    mh, mw = mask.extents
    s = mask.scale
    for y in grid_corners(height, ph, overlap):
        r0, r1 = y // s, min(mh, -(-(y + ph) // s))
        for x in grid_corners(width, pw, overlap):
            c0, c1 = x // s, min(mw, -(-(x + pw) // s))
            area = (r1 - r0) * (c1 - c0)
            tissue = integral[r1, c1] - integral[r0, c1] - integral[r1, c0] + integral[r0, c0]
            fraction = float(tissue) / area if area else 0.0
            if fraction >= min_tissue_fraction:
                out.coordinates.append(Coordinate(x, y, fraction))
    logger.info("mined %d patches of %dx%d (overlap %g, min tissue %g)", len(out), ph, pw, overlap,
                min_tissue_fraction)
    return out
