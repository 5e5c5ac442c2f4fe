"""
Configuration, losses, learning-rate schedules and the fold training loop.
"""

from medpatch.training.config import parse_config, resolve_config, write_resolved_config
from medpatch.training.losses import compute_loss
from medpatch.training.scheduler import schedule_lr
from medpatch.training.trainer import EpochLog, FoldArtifacts, FoldRunner, evaluate, train_one_fold
from medpatch.training.experiment import run_training, write_split_plan

__all__ = [
    "parse_config", "resolve_config", "write_resolved_config", "compute_loss", "schedule_lr",
    "EpochLog", "FoldArtifacts", "FoldRunner", "evaluate", "train_one_fold", "run_training", "write_split_plan",
]
