"""
Experiment configuration.

A YAML document, optionally pulling in other documents through a top-level
`import:` list (paths relative to the importing file, loaded breadth-first).
Keys from imported documents are merged under the importing document; the
same key defined by two imported documents is an error.

The resolved configuration is a Munch:

    config.model.architecture, config.patch_size, config.scheduler.gamma ...
"""

import copy
import inspect
import logging
from collections import deque
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import munch
import yaml

from medpatch.augment.plan import AugmentationPlan
from medpatch.errors import ConfigError
from medpatch.models.spec import ArchSpec, TASKS
from medpatch.preprocess import parse_steps
from medpatch.registry import lookup
from medpatch.result import Ok, Result
from medpatch.sampler import LABEL_POLICIES, PAD_POLICIES

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "resolved_config.yaml"

REQUIRED = object()

# nested dicts are validated sections; FREE marks values taken as given
FREE = "free"

SCHEMA: Dict[str, Any] = {
    "version": {"minimum": REQUIRED, "maximum": REQUIRED},
    "task": "segmentation",
    "model": {
        "architecture": REQUIRED,
        "dims": 2,
        "base_filters": 8,
        "depth": 3,
        "final_activation": "softmax",
        "batch_norm": False,
        "class_list": [0, 1],
        "num_channels": 1,
    },
    "patch_size": REQUIRED,
    "batch_size": 4,
    "epochs": REQUIRED,
    "learning_rate": REQUIRED,
    "loss": REQUIRED,
    "loss_params": FREE,
    "scheduler": {"type": "constant", "gamma": 0.1, "step_size": 10},
    "optimizer": {"type": "sgd", "momentum": 0.9, "weight_decay": 0.0},
    "clip_grad_norm": None,
    "nested_training": {"testing": 5, "validation": 5, "mode": "nested"},
    "data_preprocessing": FREE,
    "data_augmentation": FREE,
    "q_samples_per_volume": 4,
    "q_max_length": 16,
    "q_num_workers": 1,
    "q_shuffle": True,
    "label_policy": {"type": "foreground_biased", "ratio": 0.5},
    "patch_pad": "zero",
    "inference": {"overlap": 0.5, "mode": "average", "post_processing": FREE},
    "seed": 42,
}

FREE_DEFAULTS = {
    "loss_params": {},
    "data_preprocessing": [],
    "data_augmentation": {},
    "inference.post_processing": [],
}

EXAMPLES = {
    "version.minimum": "0.1.0",
    "version.maximum": "0.1.0",
    "model.architecture": "resunet",
    "patch_size": "[64, 64]",
    "epochs": "20",
    "learning_rate": "0.01",
    "loss": "dice",
}

SCHEDULERS = ("constant", "step")
OPTIMIZERS = ("sgd",)
NESTED_MODES = ("nested", "single_fold")
STITCH_MODES = ("average", "crop")
POST_PROCESSING = ("fill_holes", "largest_component")


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that refuses a key repeated inside one mapping."""

    def construct_mapping(self, node, deep=False):
        seen = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)
            if key in seen:
                raise yaml.constructor.ConstructorError(
                    None, None, f"duplicate key '{key}'", key_node.start_mark)
            seen.add(key)
        return super().construct_mapping(node, deep=deep)


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            content = yaml.load(f, Loader=_StrictLoader)
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise ConfigError(f"{path}: top level must be a mapping, got {type(content).__name__}")
    return content


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_document(path) -> Dict[str, Any]:
    """Read a configuration and its imports into one plain mapping."""
    main_path = Path(path)
    main = _read_yaml(main_path)
    imported: Dict[str, Any] = {}
    origin: Dict[str, Path] = {}

    queue = deque((main_path.parent / p, main_path) for p in main.pop("import", None) or [])
    visited = {main_path.resolve()}
    while queue:
        current, parent = queue.popleft()
        if current.resolve() in visited:
            continue
        visited.add(current.resolve())
        if not current.exists():
            raise ConfigError(f"{parent} imports {current}, which does not exist")
        content = _read_yaml(current)
        queue.extend((current.parent / p, current) for p in content.pop("import", None) or [])
        for key, value in content.items():
            if key in imported:
                raise ConfigError(f"duplicate definition of '{key}' in {origin[key]} and {current}")
            imported[key] = value
            origin[key] = current
    return _deep_merge(imported, main)


def _check_keys(document: Dict[str, Any], schema: Dict[str, Any], prefix: str = "") -> List[str]:
    """Reject unknown keys and collect missing mandatory ones."""
    unknown = sorted(k for k in document if k not in schema)
    if unknown:
        where = f"section '{prefix[:-1]}'" if prefix else "top level"
        raise ConfigError(f"unknown key(s) {unknown} at {where}; accepted keys: {sorted(schema)}")
    missing = []
    for key, spec in schema.items():
        name = prefix + key
        if spec is REQUIRED:
            if document.get(key) is None:
                missing.append(name)
        elif isinstance(spec, dict):
            value = document.get(key)
            if value is None:
                missing.extend(prefix + key + "." + k for k, v in spec.items() if v is REQUIRED)
            elif not isinstance(value, dict):
                raise ConfigError(f"'{name}' must be a mapping, got {value!r}")
            else:
                missing.extend(_check_keys(value, spec, name + "."))
    return missing


def _fill(document: Dict[str, Any], schema: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    out = {}
    for key, spec in schema.items():
        name = prefix + key
        value = document.get(key)
        if isinstance(spec, dict):
            out[key] = _fill(value or {}, spec, name + ".")
        elif spec is FREE:
            out[key] = copy.deepcopy(value) if value is not None else copy.deepcopy(FREE_DEFAULTS[name])
        elif value is None:
            out[key] = None if spec is REQUIRED else copy.deepcopy(spec)
        else:
            out[key] = value
    return out


def version_tuple(version: str) -> Tuple[int, ...]:
    parts = []
    for part in str(version).split("."):
        digits = "".join(ch for ch in part if ch.isdigit())
        if not digits:
            break
        parts.append(int(digits))
    if not parts:
        raise ConfigError(f"'{version}' is not a version number")
    return tuple(parts)


def check_version(minimum: str, maximum: str, current: Optional[str] = None) -> None:
    if current is None:
        from medpatch import __version__ as current
    parsed = [version_tuple(v) for v in (minimum, maximum, current)]
    width = max(len(v) for v in parsed)
    lo, hi, now = (v + (0,) * (width - len(v)) for v in parsed)
    if lo > hi:
        raise ConfigError(f"version.minimum {minimum} is greater than version.maximum {maximum}")
    if not lo <= now <= hi:
        raise ConfigError(
            f"configuration requires medpatch between {minimum} and {maximum}, this is medpatch {current}")


def _positive_int(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
    return value


def arch_spec(config) -> ArchSpec:
    model = config["model"]
    task = config["task"]
    classes = 1 if task == "regression" else len(model["class_list"])
    return ArchSpec(
        architecture=model["architecture"],
        dims=model["dims"],
        in_channels=model["num_channels"],
        classes=classes,
        base_filters=model["base_filters"],
        depth=model["depth"],
        final_activation=model["final_activation"],
        batch_norm=bool(model["batch_norm"]),
        task=task,
    )


def _check_values(cfg: Dict[str, Any]) -> None:
    if cfg["task"] not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got '{cfg['task']}'")
    model = cfg["model"]
    class_list = model["class_list"]
    if not isinstance(class_list, list) or not class_list:
        raise ConfigError(f"model.class_list must be a non-empty list, got {class_list!r}")
    if len(set(class_list)) != len(class_list):
        raise ConfigError(f"model.class_list has repeated values: {class_list}")
    if cfg["task"] != "regression" and len(class_list) < 2:
        raise ConfigError(f"task {cfg['task']} needs at least two classes in model.class_list")

    patch = cfg["patch_size"]
    if not isinstance(patch, list) or not all(isinstance(p, int) and p >= 1 for p in patch):
        raise ConfigError(f"patch_size must be a list of positive integers, e.g. {EXAMPLES['patch_size']}, got {patch!r}")
    if len(patch) != model["dims"]:
        raise ConfigError(f"patch_size {patch} has {len(patch)} entries, model.dims is {model['dims']}")

    _positive_int("epochs", cfg["epochs"])
    _positive_int("batch_size", cfg["batch_size"])
    if not isinstance(cfg["learning_rate"], (int, float)) or not cfg["learning_rate"] > 0:
        raise ConfigError(f"learning_rate must be > 0, got {cfg['learning_rate']!r}")

    scheduler = cfg["scheduler"]
    if scheduler["type"] not in SCHEDULERS:
        raise ConfigError(f"scheduler.type must be one of {SCHEDULERS}, got '{scheduler['type']}'")
    if not scheduler["gamma"] > 0:
        raise ConfigError(f"scheduler.gamma must be > 0, got {scheduler['gamma']}")
    _positive_int("scheduler.step_size", scheduler["step_size"])

    optimizer = cfg["optimizer"]
    if optimizer["type"] not in OPTIMIZERS:
        raise ConfigError(f"optimizer.type must be one of {OPTIMIZERS}, got '{optimizer['type']}'")
    if not 0 <= optimizer["momentum"] < 1:
        raise ConfigError(f"optimizer.momentum must be in [0, 1), got {optimizer['momentum']}")
    if optimizer["weight_decay"] < 0:
        raise ConfigError(f"optimizer.weight_decay must be >= 0, got {optimizer['weight_decay']}")
    if cfg["clip_grad_norm"] is not None and not cfg["clip_grad_norm"] > 0:
        raise ConfigError(f"clip_grad_norm must be > 0 when set, got {cfg['clip_grad_norm']}")

    nested = cfg["nested_training"]
    for key in ("testing", "validation"):
        if _positive_int(f"nested_training.{key}", nested[key]) < 2:
            raise ConfigError(f"nested_training.{key} must be >= 2, got {nested[key]}")
    if nested["mode"] not in NESTED_MODES:
        raise ConfigError(f"nested_training.mode must be one of {NESTED_MODES}, got '{nested['mode']}'")

    for key in ("q_samples_per_volume", "q_max_length", "q_num_workers"):
        _positive_int(key, cfg[key])
    if cfg["label_policy"]["type"] not in LABEL_POLICIES:
        raise ConfigError(f"label_policy.type must be one of {LABEL_POLICIES}, got '{cfg['label_policy']['type']}'")
    if not 0 <= cfg["label_policy"]["ratio"] <= 1:
        raise ConfigError(f"label_policy.ratio must be in [0, 1], got {cfg['label_policy']['ratio']}")
    if cfg["patch_pad"] not in PAD_POLICIES:
        raise ConfigError(f"patch_pad must be one of {PAD_POLICIES}, got '{cfg['patch_pad']}'")

    inference = cfg["inference"]
    if not 0 <= inference["overlap"] < 1:
        raise ConfigError(f"inference.overlap must be in [0, 1), got {inference['overlap']}")
    if inference["mode"] not in STITCH_MODES:
        raise ConfigError(f"inference.mode must be one of {STITCH_MODES}, got '{inference['mode']}'")
    unknown = [p for p in inference["post_processing"] if p not in POST_PROCESSING]
    if unknown:
        raise ConfigError(f"inference.post_processing entries {unknown} unknown; accepted: {list(POST_PROCESSING)}")
    if not isinstance(cfg["seed"], int):
        raise ConfigError(f"seed must be an integer, got {cfg['seed']!r}")


def _check_registered(cfg: Dict[str, Any], spec: ArchSpec, plugins_path: Optional[str]) -> None:
    task = cfg["task"]
    res = lookup("architecture", spec.architecture, plugins_path)
    if not res:
        raise ConfigError(str(res.error))
    arch_tasks = getattr(res.unwrapped, "tasks", TASKS)
    if task not in arch_tasks:
        raise ConfigError(f"architecture '{spec.architecture}' supports tasks {list(arch_tasks)}, not '{task}'")

    res = lookup("loss", cfg["loss"], plugins_path)
    if not res:
        raise ConfigError(str(res.error))
    loss_tasks = getattr(res.unwrapped, "tasks", TASKS)
    if task not in loss_tasks:
        raise ConfigError(f"loss '{cfg['loss']}' is for {list(loss_tasks)} tasks, incompatible with task '{task}'")
    try:
        inspect.signature(res.unwrapped).bind(None, None, **(cfg["loss_params"] or {}))
    except TypeError as e:
        raise ConfigError(f"loss_params do not fit loss '{cfg['loss']}': {e}") from e

    res = parse_steps(cfg["data_preprocessing"], plugins_path)
    if not res:
        raise ConfigError(str(res.error))
    res = AugmentationPlan.from_config(cfg["data_augmentation"], plugins_path)
    if not res:
        raise ConfigError(str(res.error))


def resolve_config(document: Dict[str, Any], plugins_path: Optional[str] = None) -> munch.Munch:
    """Validate a plain mapping and fill in defaults. Raises ConfigError."""
    missing = _check_keys(document, SCHEMA)
    if missing:
        hints = ", ".join(f"{m} (e.g. {EXAMPLES.get(m, '...')})" for m in missing)
        raise ConfigError(f"missing mandatory key(s): {hints}")
    cfg = _fill(document, SCHEMA)
    check_version(str(cfg["version"]["minimum"]), str(cfg["version"]["maximum"]))
    _check_values(cfg)
    spec = arch_spec(cfg)
    spec.check_input_extents(cfg["patch_size"])
    _check_registered(cfg, spec, plugins_path)
    return munch.munchify(cfg)


def parse_config(path, plugins_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
                 ) -> Result[munch.Munch]:
    """Load, merge imports, apply top-level overrides (e.g. the CLI seed) and validate."""
    try:
        document = load_document(path)
        document.update(overrides or {})
        config = resolve_config(document, plugins_path)
    except ConfigError as e:
        return Result.error(f"invalid configuration {path}", e)
    logger.info("configuration %s: %s on %s, loss %s", path, config.model.architecture, config.task, config.loss)
    return Ok(config)


def dump_config(config) -> str:
    return yaml.safe_dump(munch.unmunchify(config), sort_keys=False)


def write_resolved_config(config, directory) -> Result[Path]:
    path = Path(directory) / RESOLVED_CONFIG_NAME
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_config(config), encoding="utf-8")
    except OSError as e:
        return Result.error(f"could not write {path}", e)
    return Ok(path)
