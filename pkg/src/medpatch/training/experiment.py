"""
Experiment level: manifest + configuration -> split plan -> one training
run per fold, sequentially or in separate worker processes.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import munch

from medpatch.crossval import Fold, SplitPlan, make_nested_splits
from medpatch.data import load_subjects
from medpatch.events import Dispatcher
from medpatch.imaging.manifest import SubjectRecord, read_manifest
from medpatch.preprocess import parse_steps
from medpatch.result import Ok, Result
from medpatch.training.trainer import FoldArtifacts, train_one_fold

logger = logging.getLogger(__name__)

SPLIT_PLAN_NAME = "split_plan.csv"


def plan_splits(records: Sequence[SubjectRecord], config) -> Result[SplitPlan]:
    nested = config.nested_training
    try:
        plan = make_nested_splits([r.subject_id for r in records], nested.testing, nested.validation,
                                  config.seed, nested.mode)
    except Exception as e:
        return Result.error("cannot split the subjects into folds", e)
    return Ok(plan)


def write_split_plan(manifest, config, output) -> Result[SplitPlan]:
    res = read_manifest(manifest, config.task)
    if not res:
        return res
    res = plan_splits(res.unwrapped, config)
    if not res:
        return res
    plan = res.unwrapped
    written = plan.to_csv(Path(output) / SPLIT_PLAN_NAME)
    if not written:
        return written
    logger.info("wrote %s with %d folds", written.unwrapped, len(plan))
    return Ok(plan)


def _load(records: Sequence[SubjectRecord], config, plugins_path: Optional[str]) -> Result[Dict]:
    res = parse_steps(config.data_preprocessing, plugins_path)
    if not res:
        return Result.error("invalid data_preprocessing", res)
    res = load_subjects(records, res.unwrapped, config.task, config.model.class_list)
    if not res:
        return res
    return Ok({s.subject_id: s for s in res.unwrapped})


def _fold_worker(config: dict, fold: Fold, records: List[SubjectRecord], output: str,
                 plugins_path: Optional[str]) -> Result[FoldArtifacts]:
    config = munch.munchify(config)
    wanted = set(fold.train) | set(fold.validation)
    res = _load([r for r in records if r.subject_id in wanted], config, plugins_path)
    if not res:
        return Result.error(f"fold {fold.name}: cannot load subjects", res)
    return train_one_fold(config, fold, res.unwrapped, output, plugins_path)


def run_training(manifest, config, output, parallel: int = 1, plugins_path: Optional[str] = None,
                 dispatcher: Optional[Dispatcher] = None) -> Result[List[FoldArtifacts]]:
    """
    Train every fold of the plan into output/outer_<i>/inner_<j>/.

    With parallel > 1 folds run in that many processes; each process loads
    only its own subjects. Events are dispatched only in sequential mode.
    """
    res = write_split_plan(manifest, config, output)
    if not res:
        return res
    plan = res.unwrapped
    res = read_manifest(manifest, config.task)
    if not res:
        return res
    records = res.unwrapped

    results: List[Result[FoldArtifacts]] = []
    if parallel > 1 and len(plan) > 1:
        plain = munch.unmunchify(config)
        with ProcessPoolExecutor(max_workers=min(parallel, len(plan))) as pool:
            futures = [pool.submit(_fold_worker, plain, fold, records, str(output), plugins_path)
                       for fold in plan.folds]
            for fold, future in zip(plan.folds, futures):
                try:
                    results.append(future.result())
                except Exception as e:
                    results.append(Result.error(f"fold {fold.name}: worker process failed", e))
    else:
        res = _load(records, config, plugins_path)
        if not res:
            return res
        subjects = res.unwrapped
        for fold in plan.folds:
            results.append(train_one_fold(config, fold, subjects, output, plugins_path, dispatcher))
            if not results[-1]:
                break

    failed = [r for r in results if not r]
    if failed:
        return Result.error(f"{len(failed)} fold(s) failed", [r.error for r in failed])
    return Ok([r.unwrapped for r in results])
