"""
Nested k-fold split plans.

The shuffle is pinned: SplitMix64 seeded with the plan seed drives a
Fisher-Yates pass from the last element down, with j = next() mod (i + 1).
Any implementation following this produces byte-identical plans.

Outer folds hold out test subjects; inside each outer fold the remaining
subjects are split again into k_inner validation subsets. Partitions are
contiguous near-equal chunks of the shuffled order, the remainder going
one per chunk to the front chunks.
"""

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Sequence, Tuple

from medpatch.errors import ConfigError, ValidationError
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

MODES = ("nested", "single_fold")
CSV_COLUMNS = ("outer", "inner", "role", "subject_id")
_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next() % n


def shuffled(items: Sequence, seed: int) -> List:
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def chunks(items: Sequence, k: int) -> List[List]:
    """k contiguous chunks whose sizes differ by at most one, larger ones first."""
    base, extra = divmod(len(items), k)
    out, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        out.append(list(items[start:start + size]))
        start += size
    return out


@dataclass(frozen=True)
class Fold:
    outer: int
    inner: int
    train: Tuple[str, ...]
    validation: Tuple[str, ...]
    test: Tuple[str, ...]

    @property
    def name(self) -> str:
        return f"outer_{self.outer}/inner_{self.inner}"

    def roles(self) -> Iterator[Tuple[str, Tuple[str, ...]]]:
        yield "train", self.train
        yield "validation", self.validation
        yield "test", self.test


@dataclass(frozen=True)
class SplitPlan:
    k_outer: int
    k_inner: int
    seed: int
    mode: str
    folds: Tuple[Fold, ...]

    def __len__(self) -> int:
        return len(self.folds)

    def rows(self) -> Iterator[Tuple[int, int, str, str]]:
        for fold in self.folds:
            for role, ids in fold.roles():
                for subject_id in ids:
                    yield fold.outer, fold.inner, role, subject_id

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(self.rows())
        return buffer.getvalue()

    def to_csv(self, path) -> Result[Path]:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_csv_text(), encoding="utf-8")
        except OSError as e:
            return Result.error(f"could not write split plan {path}", e)
        return Ok(path)


def make_nested_splits(subject_ids: Sequence[str], k_outer: int, k_inner: int, seed: int,
                       mode: str = "nested") -> SplitPlan:
    if mode not in MODES:
        raise ConfigError(f"nested_training.mode must be one of {MODES}, got '{mode}'")
    if k_outer < 2 or k_inner < 2:
        raise ConfigError(f"nested_training needs testing >= 2 and validation >= 2, got {k_outer} and {k_inner}")
    ids = [str(s) for s in subject_ids]
    seen, duplicates = set(), []
    for s in ids:
        if s in seen and s not in duplicates:
            duplicates.append(s)
        seen.add(s)
    if duplicates:
        raise ValidationError("duplicate subject ids", duplicates)
    minimum = k_outer * k_inner
    if len(ids) < minimum:
        raise ConfigError(
            f"{len(ids)} subjects cannot be split {k_outer} x {k_inner}, at least {minimum} are needed")

    order = shuffled(ids, seed)
    outer_chunks = chunks(order, k_outer)
    folds = []
    for i, test in enumerate(outer_chunks):
        remaining = [s for c, chunk in enumerate(outer_chunks) if c != i for s in chunk]
        inner_chunks = chunks(remaining, k_inner)
        for j, validation in enumerate(inner_chunks):
            train = [s for c, chunk in enumerate(inner_chunks) if c != j for s in chunk]
            folds.append(Fold(i, j, tuple(train), tuple(validation), tuple(test)))
            if mode == "single_fold":
                break
        if mode == "single_fold":
            break
    logger.info("split %d subjects into %d fold(s) (%d x %d, %s)", len(ids), len(folds), k_outer, k_inner, mode)
    return SplitPlan(k_outer, k_inner, int(seed), mode, tuple(folds))
