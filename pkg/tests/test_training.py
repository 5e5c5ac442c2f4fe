import csv
from pathlib import Path

import numpy as np
import pytest
import yaml

from medpatch.core import Tensor
from medpatch.crossval import Fold
from medpatch.data import load_subjects
from medpatch.errors import ConfigError, DimensionError
from medpatch.events import Dispatcher
from medpatch.imaging import read_manifest
from medpatch.models import load_checkpoint
from medpatch.preprocess import parse_steps
from medpatch.result import Ok
from medpatch.synthetic import make_dataset
from medpatch.training import (compute_loss, evaluate, parse_config, resolve_config, run_training, schedule_lr,
                               train_one_fold, write_resolved_config, write_split_plan)
from medpatch.training.losses import one_hot
from medpatch.types import EventHandler

from conftest import base_config


def write_yaml(path, content):
    path.write_text(yaml.safe_dump(content, sort_keys=False), encoding="utf-8")
    return path


DEMO = Path(__file__).resolve().parents[1] / "demo"

MINIMAL = {
    "version": {"minimum": "0.1.0", "maximum": "0.1.0"},
    "model": {"architecture": "unet", "base_filters": 4, "depth": 2},
    "patch_size": [8, 8],
    "epochs": 1,
    "learning_rate": 0.01,
    "loss": "dice",
}


class _Recorder(EventHandler):
    def __init__(self):
        self.events = []

    def handle_event(self, event):
        self.events.append(event)
        return Ok(None)


def loaded_subjects(manifest, config):
    records = read_manifest(manifest, config.task).unwrapped
    return {s.subject_id: s for s in load_subjects(records, [], config.task, config.model.class_list).unwrapped}


class TestConfig:
    def test_defaults_filled(self):
        config = resolve_config(dict(MINIMAL))
        assert config.task == "segmentation"
        assert config.scheduler.type == "constant"
        assert config.inference.mode == "average"
        assert config.nested_training.mode == "nested"
        assert config.data_preprocessing == []
        assert config.model.class_list == [0, 1]

    def test_missing_keys_listed_with_examples(self):
        with pytest.raises(ConfigError) as info:
            resolve_config({})
        message = str(info.value)
        for key in ("version.minimum", "model.architecture", "patch_size", "epochs", "learning_rate", "loss"):
            assert key in message
        assert "e.g. [64, 64]" in message

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="learning_rat"):
            resolve_config({**MINIMAL, "learning_rat": 0.1})

    def test_unknown_key_in_section(self):
        with pytest.raises(ConfigError, match="section 'model'"):
            resolve_config({**MINIMAL, "model": {**MINIMAL["model"], "width": 3}})

    def test_version_outside_range(self):
        with pytest.raises(ConfigError, match="requires medpatch"):
            resolve_config({**MINIMAL, "version": {"minimum": "9.0", "maximum": "9.1"}})

    def test_version_range_inverted(self):
        with pytest.raises(ConfigError, match="greater"):
            resolve_config({**MINIMAL, "version": {"minimum": "0.2.0", "maximum": "0.1.0"}})

    def test_patch_not_divisible(self):
        with pytest.raises(ConfigError, match="divisible"):
            resolve_config({**MINIMAL, "patch_size": [8, 7]})

    def test_patch_axes_must_match_dims(self):
        with pytest.raises(ConfigError, match="model.dims"):
            resolve_config({**MINIMAL, "patch_size": [8, 8, 8]})

    def test_loss_must_fit_task(self):
        with pytest.raises(ConfigError, match="incompatible"):
            resolve_config({**MINIMAL, "loss": "mse"})

    def test_architecture_must_fit_task(self):
        with pytest.raises(ConfigError, match="supports tasks"):
            resolve_config({**MINIMAL, "task": "regression", "loss": "mse"})

    def test_loss_params(self):
        config = resolve_config({**MINIMAL, "loss": "tversky", "loss_params": {"alpha": 0.3, "beta": 0.7}})
        assert config.loss_params == {"alpha": 0.3, "beta": 0.7}

    def test_unknown_architecture(self):
        with pytest.raises(ConfigError, match="transformer"):
            resolve_config({**MINIMAL, "model": {"architecture": "transformer"}})

    @pytest.mark.parametrize("key,value", [
        ("epochs", 0),
        ("learning_rate", -0.1),
        ("nested_training", {"testing": 1}),
        ("inference", {"overlap": 1.0}),
        ("inference", {"post_processing": ["smooth"]}),
        ("label_policy", {"ratio": 1.5}),
        ("optimizer", {"momentum": 1.0}),
        ("data_preprocessing", ["histogram_match"]),
        ("data_augmentation", {"sharpen": {}}),
        ("loss_params", {"alpha": 0.3}),
    ])
    def test_invalid_values(self, key, value):
        with pytest.raises(ConfigError):
            resolve_config({**MINIMAL, key: value})

    def test_imports_and_overrides(self, tmp_path):
        write_yaml(tmp_path / "model.yaml", {"model": MINIMAL["model"], "batch_size": 8})
        write_yaml(tmp_path / "training.yaml", {"epochs": 3, "learning_rate": 0.5, "loss": "dice"})
        main = write_yaml(tmp_path / "main.yaml", {
            "import": ["model.yaml", "training.yaml"],
            "version": MINIMAL["version"],
            "patch_size": [8, 8],
            "batch_size": 2,
        })
        res = parse_config(main, overrides={"seed": 7})
        assert res, res
        config = res.unwrapped
        assert config.batch_size == 2
        assert config.epochs == 3
        assert config.model.base_filters == 4
        assert config.seed == 7

    def test_key_defined_by_two_imports(self, tmp_path):
        write_yaml(tmp_path / "a.yaml", {"epochs": 1})
        write_yaml(tmp_path / "b.yaml", {"epochs": 2})
        main = write_yaml(tmp_path / "main.yaml", {**MINIMAL, "import": ["a.yaml", "b.yaml"]})
        res = parse_config(main)
        assert not res
        assert "duplicate definition of 'epochs'" in str(res.error)

    def test_missing_import(self, tmp_path):
        main = write_yaml(tmp_path / "main.yaml", {**MINIMAL, "import": ["absent.yaml"]})
        res = parse_config(main)
        assert not res
        assert "absent.yaml" in str(res.error)

    def test_repeated_key_in_one_file(self, tmp_path):
        path = tmp_path / "main.yaml"
        path.write_text("epochs: 1\nepochs: 2\n", encoding="utf-8")
        res = parse_config(path)
        assert not res
        assert "duplicate key" in str(res.error)

    def test_resolved_config_parses_back(self, tmp_path, config):
        path = write_resolved_config(config, tmp_path).unwrapped
        again = parse_config(path)
        assert again, again
        assert again.unwrapped == config

    @pytest.mark.parametrize("name", ["segmentation", "regression"])
    def test_demo_configurations(self, name):
        res = parse_config(DEMO / name / "config.yaml")
        assert res, res

    def test_demo_imports(self):
        config = parse_config(DEMO / "segmentation" / "config.yaml").unwrapped
        assert config.model.architecture == "resunet"
        assert list(config.data_augmentation)[:2] == ["flip", "affine"]
        assert config.optimizer.type == "sgd"

    def test_plugin_loss_in_configuration(self):
        with pytest.raises(ConfigError):
            resolve_config({**MINIMAL, "loss": "focal"})
        config = resolve_config({**MINIMAL, "loss": "focal"}, plugins_path=str(DEMO / "plugins"))
        assert config.loss == "focal"


class TestLosses:
    def test_mse(self):
        assert compute_loss(Tensor(np.zeros((2, 1))), np.array([1.0, 1.0]), "mse").item() == pytest.approx(1.0)

    def test_dice_perfect_and_disjoint(self):
        mask = np.zeros((1, 4, 4), dtype=np.int64)
        mask[0, 1:3, 1:3] = 1
        perfect = compute_loss(Tensor(one_hot(mask, 2)), mask, "dice").item()
        disjoint = compute_loss(Tensor(one_hot(1 - mask, 2)), mask, "dice").item()
        assert perfect == pytest.approx(0.0, abs=1e-6)
        assert disjoint == pytest.approx(1.0, abs=1e-6)

    def test_tversky_with_equal_weights_is_dice(self, rng):
        mask = rng.integers(0, 2, size=(2, 6, 6))
        p = rng.uniform(size=(2, 1, 6, 6))
        pred = Tensor(np.concatenate([1 - p, p], axis=1))
        assert compute_loss(pred, mask, "tversky").item() == pytest.approx(compute_loss(pred, mask, "dice").item(),
                                                                            abs=1e-6)

    def test_cross_entropy_of_uniform_prediction(self):
        pred = Tensor(np.full((3, 2), 0.5))
        assert compute_loss(pred, np.array([0, 1, 1]), "cross_entropy").item() == pytest.approx(np.log(2.0))

    def test_target_outside_class_range(self):
        with pytest.raises(DimensionError):
            compute_loss(Tensor(np.full((1, 2, 2, 2), 0.5)), np.full((1, 2, 2), 2), "dice")

    def test_unknown_loss(self):
        with pytest.raises(ConfigError):
            compute_loss(Tensor(np.zeros((1, 1))), np.zeros(1), "hinge")

    def test_focal_plugin(self):
        plugins = str(DEMO / "plugins")
        mask = np.array([[[0, 1], [1, 0]]])
        perfect = compute_loss(Tensor(one_hot(mask, 2)), mask, "focal", plugins_path=plugins).item()
        assert perfect == pytest.approx(0.0, abs=1e-9)
        uniform = compute_loss(Tensor(np.full((1, 2, 2, 2), 0.5)), mask, "focal", {"gamma": 0.0}, plugins).item()
        assert uniform == pytest.approx(np.log(2.0))


class TestScheduler:
    def test_step(self):
        step = {"type": "step", "gamma": 0.1, "step_size": 10}
        assert schedule_lr(1.0, step, 9) == 1.0
        assert schedule_lr(1.0, step, 10) == pytest.approx(0.1)
        assert schedule_lr(1.0, step, 25) == pytest.approx(0.01)

    def test_constant(self):
        assert schedule_lr(0.3, {"type": "constant"}, 100) == 0.3

    def test_invalid(self):
        with pytest.raises(ConfigError):
            schedule_lr(1.0, {"type": "constant"}, -1)
        with pytest.raises(ConfigError):
            schedule_lr(1.0, {"type": "cosine"}, 0)
        with pytest.raises(ConfigError):
            schedule_lr(1.0, {"type": "step", "gamma": 0.1, "step_size": 0}, 3)


class TestFold:
    def test_artifacts(self, tmp_path, segmentation_manifest):
        config = base_config(epochs=2)
        subjects = loaded_subjects(segmentation_manifest, config)
        dispatcher = Dispatcher.create().unwrapped
        recorder = _Recorder()
        dispatcher.register_event_handler("trainer", recorder)
        fold = Fold(0, 0, ("s0", "s1"), ("s2",), ("s3",))
        res = train_one_fold(config, fold, subjects, tmp_path / "run", dispatcher=dispatcher)
        assert res, res
        artifacts = res.unwrapped

        directory = tmp_path / "run" / "outer_0" / "inner_0"
        assert artifacts.directory == directory
        for name in ("model_latest.mpck", "model_best.mpck", "resolved_config.yaml", "logs.csv",
                     "training_curves.png"):
            assert (directory / name).exists(), name
        rows = list(csv.DictReader(open(directory / "logs.csv", encoding="utf-8")))
        assert [int(r["epoch"]) for r in rows] == [0, 1]
        assert all(np.isfinite(float(r["train_loss"])) for r in rows)
        assert artifacts.best_epoch in (0, 1)
        assert artifacts.best_val_loss == min(log.val_loss for log in artifacts.logs)

        names = [e["name"] for e in recorder.events]
        assert names.count("epoch-end") == 2
        kinds = [e["data"]["kind"] for e in recorder.events if e["name"] == "checkpoint"]
        assert kinds.count("latest") == 2
        assert "best" in kinds

    def test_best_checkpoint_reproduces_best_validation_loss(self, tmp_path, segmentation_manifest):
        config = base_config(epochs=3)
        subjects = loaded_subjects(segmentation_manifest, config)
        fold = Fold(0, 0, ("s0", "s1", "s2"), ("s3", "s4"), ("s5",))
        artifacts = train_one_fold(config, fold, subjects, tmp_path).unwrapped

        res = load_checkpoint(artifacts.best_path)
        assert res, res
        model, meta = res.unwrapped
        assert meta["epoch"] == artifacts.best_epoch
        loss, _ = evaluate(model, [subjects[s] for s in fold.validation], config)
        assert loss == pytest.approx(artifacts.best_val_loss, abs=1e-9)

    def test_unloaded_subject(self, tmp_path, segmentation_manifest, config):
        subjects = loaded_subjects(segmentation_manifest, config)
        fold = Fold(0, 0, ("s0", "nobody"), ("s2",), ())
        res = train_one_fold(config, fold, subjects, tmp_path)
        assert not res
        assert "nobody" in str(res.error)

    def test_evaluate_without_subjects(self, config):
        loss, metric = evaluate(None, [], config)
        assert np.isnan(loss) and np.isnan(metric)


class TestExperiment:
    def test_split_plan_file(self, tmp_path, segmentation_manifest, config):
        res = write_split_plan(segmentation_manifest, config, tmp_path)
        assert res, res
        assert len(res.unwrapped) == 6
        assert (tmp_path / "split_plan.csv").exists()

    def test_single_fold_run(self, tmp_path, segmentation_manifest):
        config = base_config(nested_training={"mode": "single_fold"})
        res = run_training(segmentation_manifest, config, tmp_path / "out")
        assert res, res
        (artifacts,) = res.unwrapped
        assert (tmp_path / "out" / "outer_0" / "inner_0" / "model_best.mpck").exists()
        assert len(artifacts.logs) == 1

    def test_too_few_subjects(self, tmp_path, segmentation_manifest):
        config = base_config(nested_training={"testing": 3, "validation": 3})
        res = run_training(segmentation_manifest, config, tmp_path / "out")
        assert not res
        assert "at least 9" in str(res.error)

    @pytest.mark.slow
    def test_nested_run_in_processes(self, tmp_path, segmentation_manifest, config):
        res = run_training(segmentation_manifest, config, tmp_path / "out", parallel=2)
        assert res, res
        assert len(res.unwrapped) == 6
        assert len(list((tmp_path / "out").glob("outer_*/inner_*/model_best.mpck"))) == 6


def held_out_fold(manifest, config, steps):
    """Load every subject and split them 160/20/20 in manifest order."""
    records = read_manifest(manifest, config.task).unwrapped
    subjects = {s.subject_id: s for s in load_subjects(records, steps, config.task,
                                                       config.model.class_list).unwrapped}
    ids = [r.subject_id for r in records]
    return Fold(0, 0, tuple(ids[:160]), tuple(ids[160:180]), tuple(ids[180:])), subjects


@pytest.mark.slow
class TestSyntheticExperiments:
    def test_ellipse_segmentation(self, tmp_path):
        manifest = make_dataset("ellipses", tmp_path / "data", 200, (64, 64), seed=0).unwrapped
        config = base_config(
            model={"architecture": "resunet", "base_filters": 8, "depth": 3, "batch_norm": True},
            patch_size=[32, 32], batch_size=4, epochs=20, learning_rate=0.01,
            optimizer={"momentum": 0.9}, clip_grad_norm=5.0, data_preprocessing=["zscore"],
            q_samples_per_volume=4, q_max_length=32, label_policy={"type": "foreground_biased", "ratio": 0.7},
        )
        fold, subjects = held_out_fold(manifest, config, parse_steps(["zscore"]).unwrapped)
        artifacts = train_one_fold(config, fold, subjects, tmp_path / "run").unwrapped
        model, _ = load_checkpoint(artifacts.best_path).unwrapped
        _, dice = evaluate(model, [subjects[s] for s in fold.test], config)
        assert dice >= 0.90

    def test_mean_intensity_regression(self, tmp_path):
        manifest = make_dataset("regression", tmp_path / "data", 200, (32, 32), seed=0).unwrapped
        config = base_config(
            task="regression", model={"architecture": "vgg11", "base_filters": 8, "final_activation": "none"},
            patch_size=[32, 32], batch_size=8, epochs=20, learning_rate=0.005, loss="mse",
            q_samples_per_volume=1,
        )
        fold, subjects = held_out_fold(manifest, config, [])
        artifacts = train_one_fold(config, fold, subjects, tmp_path / "run").unwrapped
        model, _ = load_checkpoint(artifacts.best_path).unwrapped
        _, mse = evaluate(model, [subjects[s] for s in fold.test], config)
        targets = np.array([s.target for s in subjects.values()])
        assert mse < 0.1 * targets.var()
