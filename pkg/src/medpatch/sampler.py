"""
Patch extraction and the training patch queue.

Per epoch the queue yields exactly len(subjects) * samples_per_volume
patches. Every patch is built from its own generator seeded with
(seed, epoch, subject, sample), so the sequence does not depend on the
number of workers: workers only prefetch, results are yielded in job order.
"""

import logging
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from medpatch.augment.plan import AugmentationPlan, Sample, compose
from medpatch.data import SubjectData
from medpatch.errors import ConfigError, DimensionError
from medpatch.events import Dispatcher
from medpatch.result import Ok, Result
from medpatch.types import Object

logger = logging.getLogger(__name__)

PAD_POLICIES = ("zero", "reflect")
LABEL_POLICIES = ("uniform", "foreground_biased")


@dataclass
class Patch:
    values: np.ndarray
    subject_id: str
    corner: Tuple[int, ...]
    size: Tuple[int, ...]
    mask: Optional[np.ndarray] = None
    target: Optional[float] = None


def extract_patch(image: np.ndarray, corner: Sequence[int], size: Sequence[int], pad_policy: str = "zero",
                  mask: Optional[np.ndarray] = None, subject_id: str = "") -> Patch:
    """
    Copy the (C, *size) window at `corner` out of a (C, *S) image. Parts
    outside the image are zero-filled or mirrored (reflect, without
    repeating the edge voxel).
    """
    if pad_policy not in PAD_POLICIES:
        raise ConfigError(f"pad policy must be one of {PAD_POLICIES}, got '{pad_policy}'")
    extents = image.shape[1:]
    if len(corner) != len(extents) or len(size) != len(extents):
        raise DimensionError(f"corner {tuple(corner)} / size {tuple(size)} do not match {len(extents)} spatial axes")

    inner, pads = [], []
    for axis, (lo, p, n) in enumerate(zip(corner, size, extents)):
        hi = lo + p
        if p < 1:
            raise DimensionError(f"patch size on axis {axis} must be >= 1, got {p}")
        before, after = max(0, -lo), max(0, hi - n)
        if pad_policy == "zero" and (hi <= 0 or lo >= n):
            raise DimensionError(f"patch [{lo}, {hi}) on axis {axis} does not overlap the image extent {n}")
        if pad_policy == "reflect" and max(before, after) > n - 1:
            raise DimensionError(
                f"patch [{lo}, {hi}) on axis {axis} needs {max(before, after)} voxels of reflection, extent {n} allows {n - 1}")
        inner.append(slice(max(lo, 0), min(hi, n)))
        pads.append((before, after))

    mode = "constant" if pad_policy == "zero" else "reflect"
    values = np.pad(image[(slice(None),) + tuple(inner)], [(0, 0)] + pads, mode=mode)
    patch_mask = None
    if mask is not None:
        patch_mask = np.pad(mask[tuple(inner)], pads, mode=mode)
    return Patch(values, subject_id, tuple(int(c) for c in corner), tuple(int(s) for s in size), patch_mask)


def centered_corner(extents: Sequence[int], size: Sequence[int]) -> Tuple[int, ...]:
    """Corner of a centered crop (size <= extent) or a centered zero pad (size > extent)."""
    return tuple((n - p) // 2 for n, p in zip(extents, size))


def centered_fit(image: np.ndarray, size: Sequence[int]) -> np.ndarray:
    """Centered crop-or-zero-pad of a (C, *S) image to (C, *size)."""
    return extract_patch(image, centered_corner(image.shape[1:], size), size).values


@dataclass(frozen=True)
class QueueSpec:
    samples_per_volume: int = 4
    max_queue_length: int = 16
    shuffle: bool = True
    num_workers: int = 1

    def __post_init__(self):
        for name in ("samples_per_volume", "max_queue_length", "num_workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"queue {name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class LabelPolicy:
    kind: str = "foreground_biased"
    ratio: float = 0.5

    def __post_init__(self):
        if self.kind not in LABEL_POLICIES:
            raise ConfigError(f"label policy must be one of {LABEL_POLICIES}, got '{self.kind}'")
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigError(f"foreground ratio must be in [0, 1], got {self.ratio}")


class PatchQueue(Object):
    """Bounded, deterministic producer of training patches."""

    def __init__(self, subjects: Sequence[SubjectData], patch_size: Sequence[int], spec: QueueSpec,
                 policy: LabelPolicy, seed: int, task: str = "segmentation",
                 plan: Optional[AugmentationPlan] = None, pad_policy: str = "zero",
                 dispatcher: Optional[Dispatcher] = None):
        super().__init__()
        self._subjects = list(subjects)
        self._patch_size = tuple(int(p) for p in patch_size)
        self._spec = spec
        self._policy = policy
        self._seed = int(seed)
        self._task = task
        self._plan = plan or AugmentationPlan()
        self._pad_policy = pad_policy
        self._dispatcher = dispatcher
        self._foreground: Dict[int, np.ndarray] = {}

    def init(self) -> Result[None]:
        if not self._subjects:
            return Result.error("patch queue needs at least one subject")
        if self._pad_policy not in PAD_POLICIES:
            return Result.error(f"pad policy must be one of {PAD_POLICIES}, got '{self._pad_policy}'")
        for index, subject in enumerate(self._subjects):
            if len(subject.extents) != len(self._patch_size):
                return Result.error(f"subject {subject.subject_id} has {len(subject.extents)} spatial axes, "
                                    f"patch_size {self._patch_size} has {len(self._patch_size)}")
            if self._task == "segmentation":
                if subject.mask is None:
                    return Result.error(f"subject {subject.subject_id} has no label mask for segmentation")
                if self._policy.kind == "foreground_biased":
                    self._foreground[index] = np.argwhere(subject.mask > 0)
                    if not len(self._foreground[index]):
                        logger.warning("subject %s has an empty mask, foreground sampling falls back to uniform",
                                       subject.subject_id)
            elif subject.target is None:
                return Result.error(f"subject {subject.subject_id} has no target value")
        return Ok(None)

    def __len__(self) -> int:
        return len(self._subjects) * self._spec.samples_per_volume

    def jobs(self, epoch: int) -> List[Tuple[int, int]]:
        jobs = [(s, k) for s in range(len(self._subjects)) for k in range(self._spec.samples_per_volume)]
        if self._spec.shuffle:
            order = np.random.default_rng([self._seed, epoch]).permutation(len(jobs))
            jobs = [jobs[i] for i in order]
        return jobs

    def _corner(self, index: int, subject: SubjectData, rng: np.random.Generator) -> Tuple[int, ...]:
        extents, size = subject.extents, self._patch_size
        if self._task != "segmentation":
            return centered_corner(extents, size)

        foreground = self._foreground.get(index)
        use_foreground = (self._policy.kind == "foreground_biased" and rng.random() < self._policy.ratio)
        if use_foreground and foreground is not None and len(foreground):
            center = foreground[rng.integers(len(foreground))]
            return tuple(int(np.clip(c - p // 2, 0, n - p)) if p <= n else (n - p) // 2
                         for c, p, n in zip(center, size, extents))
        if use_foreground:
            logger.warning("subject %s: no foreground voxel, sampling uniformly", subject.subject_id)
        return tuple(int(rng.integers(0, n - p + 1)) if p <= n else (n - p) // 2 for p, n in zip(size, extents))

    def make_patch(self, epoch: int, job: Tuple[int, int]) -> Patch:
        index, sample_index = job
        subject = self._subjects[index]
        rng = np.random.default_rng([self._seed, epoch, index, sample_index])
        corner = self._corner(index, subject, rng)
        patch = extract_patch(subject.image, corner, self._patch_size, self._pad_policy, subject.mask,
                              subject.subject_id)
        patch.target = subject.target
        if self._plan.entries:
            augmented = compose(self._plan, Sample(patch.values, patch.mask), rng)
            patch.values = augmented.image
            patch.mask = augmented.mask
        return patch

    def _emit(self, buffered: int) -> None:
        if self._dispatcher is None:
            return
        res = self._dispatcher.emit("queue", "buffered", buffered)
        if not res:
            logger.warning("queue/buffered handler failed: %s", res.error)

    def epoch(self, epoch: int) -> Iterator[Patch]:
        """Patches of one epoch in deterministic order; at most max_queue_length are buffered."""
        jobs = deque(self.jobs(epoch))
        pending: deque = deque()
        executor = ThreadPoolExecutor(self._spec.num_workers) if self._spec.num_workers > 1 else None

        def submit(job) -> Future:
            if executor is not None:
                return executor.submit(self.make_patch, epoch, job)
            future: Future = Future()
            future.set_result(self.make_patch(epoch, job))
            return future

        try:
            while jobs or pending:
                while jobs and len(pending) < self._spec.max_queue_length:
                    pending.append(submit(jobs.popleft()))
                    if executor is None:
                        break
                self._emit(len(pending))
                yield pending.popleft().result()
        finally:
            if executor is not None:
                executor.shutdown(wait=True, cancel_futures=True)

    def dispose(self) -> Result[None]:
        self._foreground.clear()
        return Ok(None)


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray
    subject_ids: List[str]


def iter_batches(patches: Iterable[Patch], batch_size: int, task: str = "segmentation") -> Iterator[Batch]:
    """Group patches; the last batch may be smaller."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    chunk: List[Patch] = []

    def flush() -> Batch:
        inputs = np.stack([p.values for p in chunk])
        if task == "segmentation":
            targets = np.stack([p.mask for p in chunk])
        else:
            targets = np.array([p.target for p in chunk], dtype=np.float64)
        return Batch(inputs, targets, [p.subject_id for p in chunk])

    for patch in patches:
        chunk.append(patch)
        if len(chunk) == batch_size:
            yield flush()
            chunk = []
    if chunk:
        yield flush()
