"""
One fold of training.

Per epoch: train over the patch queue, then evaluate on the validation
subjects (stitched sliding-window prediction for segmentation, a centered
crop-or-pad for regression and classification). Writes into the fold
directory:

    model_latest.mpck     after every epoch
    model_best.mpck       whenever the validation loss strictly improves
    logs.csv              one row per epoch
    resolved_config.yaml
    training_curves.png   once the fold is done
"""

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from medpatch.augment.plan import AugmentationPlan
from medpatch.core import Tape, Tensor, backward, clip_grad_norm, no_tape, sgd_step
from medpatch.crossval import Fold
from medpatch.data import SubjectData
from medpatch.events import Dispatcher
from medpatch.inference.metrics import compute_metric
from medpatch.inference.stitching import sliding_window_infer
from medpatch.models import ModelGraph, build_model, save_checkpoint
from medpatch.plots import plot_training_curves
from medpatch.result import Ok, Result
from medpatch.sampler import LabelPolicy, PatchQueue, QueueSpec, centered_fit, iter_batches
from medpatch.training.config import arch_spec, write_resolved_config
from medpatch.training.losses import compute_loss, one_hot
from medpatch.training.scheduler import schedule_lr
from medpatch.types import Object

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "val_metric", "lr", "seconds")
LOGS_NAME = "logs.csv"
LATEST_NAME = "model_latest.mpck"
BEST_NAME = "model_best.mpck"
CURVES_NAME = "training_curves.png"


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float
    lr: float
    seconds: float

    def row(self) -> List:
        return [getattr(self, c) for c in LOG_COLUMNS]


@dataclass
class FoldArtifacts:
    directory: Path
    logs: List[EpochLog] = field(default_factory=list)
    best_val_loss: float = float("inf")
    best_epoch: int = -1

    @property
    def best_path(self) -> Path:
        return self.directory / BEST_NAME

    @property
    def latest_path(self) -> Path:
        return self.directory / LATEST_NAME


def fold_directory(output, fold: Fold) -> Path:
    return Path(output) / f"outer_{fold.outer}" / f"inner_{fold.inner}"


def evaluate(model: ModelGraph, subjects: Sequence[SubjectData], config,
             plugins_path: Optional[str] = None) -> Tuple[float, float]:
    """
    Validation (loss, metric) averaged over subjects.

    The metric is the macro Dice of the stitched argmax for segmentation,
    MSE of the outputs against the (one-hot) targets otherwise.
    """
    if not subjects:
        return float("nan"), float("nan")
    losses, metrics = [], []
    with no_tape():
        if config.task == "segmentation":
            classes = len(config.model.class_list)
            for subject in subjects:
                probabilities, _ = sliding_window_infer(model, subject.image, config.patch_size,
                                                        config.inference.overlap, config.inference.mode)
                pred = Tensor(probabilities.values[np.newaxis])
                losses.append(compute_loss(pred, subject.mask[np.newaxis], config.loss, config.loss_params,
                                           plugins_path).item())
                labels = np.argmax(probabilities.values, axis=0)
                metrics.append(compute_metric(labels, subject.mask, "dice", range(1, classes)).value)
            return float(np.mean(losses)), float(np.mean(metrics))

        inputs = np.stack([centered_fit(s.image, config.patch_size) for s in subjects])
        targets = np.array([s.target for s in subjects], dtype=np.float64)
        outputs = model.predict(inputs)
        loss = compute_loss(Tensor(outputs), targets, config.loss, config.loss_params, plugins_path).item()
        expected = one_hot(targets, outputs.shape[1]) if config.task == "classification" else targets.reshape(outputs.shape)
        return float(loss), float(np.mean((outputs - expected) ** 2))


class FoldRunner(Object):
    """Owns the model, queue and output directory of one fold."""

    def __init__(self, config, fold: Fold, subjects: Dict[str, SubjectData], output,
                 plugins_path: Optional[str] = None, dispatcher: Optional[Dispatcher] = None):
        super().__init__()
        self._config = config
        self._fold = fold
        self._subjects = subjects
        self._directory = fold_directory(output, fold)
        self._plugins_path = plugins_path
        self._dispatcher = dispatcher
        self._model: Optional[ModelGraph] = None
        self._queue: Optional[PatchQueue] = None
        self._validation: List[SubjectData] = []

    @property
    def model(self) -> Optional[ModelGraph]:
        return self._model

    @property
    def directory(self) -> Path:
        return self._directory

    def init(self) -> Result[None]:
        cfg = self._config
        unknown = [s for s in self._fold.train + self._fold.validation if s not in self._subjects]
        if unknown:
            return Result.error(f"fold {self._fold.name}: subjects not loaded: {unknown}")
        try:
            self._directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            return Result.error(f"cannot create fold directory {self._directory}", e)
        res = write_resolved_config(cfg, self._directory)
        if not res:
            return res

        res = build_model(arch_spec(cfg), seed=cfg.seed, plugins_path=self._plugins_path)
        if not res:
            return Result.error(f"fold {self._fold.name}: cannot build the model", res)
        self._model = res.unwrapped
        logger.info("fold %s: %s with %d parameters", self._fold.name, cfg.model.architecture,
                    self._model.num_parameters())

        res = AugmentationPlan.from_config(cfg.data_augmentation, self._plugins_path)
        if not res:
            return Result.error(f"fold {self._fold.name}: invalid data_augmentation", res)
        plan = res.unwrapped

        try:
            spec = QueueSpec(cfg.q_samples_per_volume, cfg.q_max_length, cfg.q_shuffle, cfg.q_num_workers)
            policy = LabelPolicy(cfg.label_policy.type, cfg.label_policy.ratio)
        except Exception as e:
            return Result.error(f"fold {self._fold.name}: invalid queue settings", e)
        res = PatchQueue.create([self._subjects[s] for s in self._fold.train], cfg.patch_size, spec, policy,
                                cfg.seed, cfg.task, plan, cfg.patch_pad, self._dispatcher)
        if not res:
            return Result.error(f"fold {self._fold.name}: cannot set up the patch queue", res)
        self._queue = res.unwrapped
        self._validation = [self._subjects[s] for s in self._fold.validation]
        return Ok(None)

    def _emit(self, name: str, data) -> None:
        if self._dispatcher is None:
            return
        res = self._dispatcher.emit("trainer", name, data)
        if not res:
            logger.warning("trainer/%s handler failed: %s", name, res.error)

    def _train_epoch(self, epoch: int, lr: float) -> Result[float]:
        cfg = self._config
        params = self._model.params
        losses = []
        for index, batch in enumerate(iter_batches(self._queue.epoch(epoch), cfg.batch_size, cfg.task)):
            with Tape() as tape:
                pred = self._model.forward(batch.inputs, training=True)
                loss = compute_loss(pred, batch.targets, cfg.loss, cfg.loss_params, self._plugins_path)
            value = loss.item()
            if not np.isfinite(value):
                return Result.error(f"fold {self._fold.name}: non-finite loss {value} at epoch {epoch}, batch {index} "
                                    f"(subjects {batch.subject_ids})")
            backward(tape, loss, params)
            if cfg.clip_grad_norm is not None:
                clip_grad_norm(params, cfg.clip_grad_norm)
            sgd_step(params, lr, cfg.optimizer.momentum, cfg.optimizer.weight_decay)
            losses.append(value)
        return Ok(float(np.mean(losses)))

    def _append_log(self, path: Path, log: EpochLog) -> Result[None]:
        try:
            with open(path, "a", newline="", encoding="utf-8") as f:
                csv.writer(f, lineterminator="\n").writerow(log.row())
        except OSError as e:
            return Result.error(f"could not append to {path}", e)
        return Ok(None)

    def _checkpoint(self, path: Path, kind: str, log: EpochLog) -> Result[None]:
        meta = {"fold": self._fold.name, "epoch": log.epoch, "val_loss": log.val_loss, "val_metric": log.val_metric}
        res = save_checkpoint(self._model, path, meta)
        if not res:
            return res
        self._emit("checkpoint", {"path": str(path), "kind": kind})
        return Ok(None)

    def run(self) -> Result[FoldArtifacts]:
        cfg = self._config
        artifacts = FoldArtifacts(self._directory)
        logs_path = self._directory / LOGS_NAME
        try:
            logs_path.write_text(",".join(LOG_COLUMNS) + "\n", encoding="utf-8")
        except OSError as e:
            return Result.error(f"could not write {logs_path}", e)

        for epoch in range(cfg.epochs):
            started = time.perf_counter()
            try:
                lr = schedule_lr(cfg.learning_rate, cfg.scheduler, epoch)
                res = self._train_epoch(epoch, lr)
                if not res:
                    return res
                train_loss = res.unwrapped
                val_loss, val_metric = evaluate(self._model, self._validation, cfg, self._plugins_path)
            except Exception as e:
                return Result.error(f"fold {self._fold.name}: epoch {epoch} failed", e)

            log = EpochLog(epoch, train_loss, val_loss, val_metric, lr, time.perf_counter() - started)
            artifacts.logs.append(log)
            for res in (self._append_log(logs_path, log), self._checkpoint(artifacts.latest_path, "latest", log)):
                if not res:
                    return Result.error(f"fold {self._fold.name}: aborted at epoch {epoch}", res)
            if val_loss < artifacts.best_val_loss or artifacts.best_epoch < 0:
                artifacts.best_val_loss, artifacts.best_epoch = val_loss, epoch
                res = self._checkpoint(artifacts.best_path, "best", log)
                if not res:
                    return Result.error(f"fold {self._fold.name}: aborted at epoch {epoch}", res)
            logger.info("fold %s epoch %d: train %.6f, validation %.6f (metric %.4f), lr %g",
                        self._fold.name, epoch, train_loss, val_loss, val_metric, lr)
            self._emit("epoch-end", asdict(log))

        res = plot_training_curves([asdict(log) for log in artifacts.logs], self._directory / CURVES_NAME)
        if not res:
            logger.warning("fold %s: no training curves: %s", self._fold.name, res.error)
        return Ok(artifacts)

    def dispose(self) -> Result[None]:
        if self._queue is not None:
            self._queue.dispose()
        return Ok(None)


def train_one_fold(config, fold: Fold, subjects: Dict[str, SubjectData], output,
                   plugins_path: Optional[str] = None, dispatcher: Optional[Dispatcher] = None
                   ) -> Result[FoldArtifacts]:
    """Train the model of one fold; `subjects` maps ids to loaded subjects."""
    res = FoldRunner.create(config, fold, subjects, output, plugins_path, dispatcher)
    if not res:
        return Result.error(f"cannot start fold {fold.name}", res)
    runner = res.unwrapped
    try:
        return runner.run()
    finally:
        runner.dispose()
