import importlib
import importlib.util
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from medpatch.decorators import CATEGORIES, pending
from medpatch.result import Ok, Result
from medpatch.types import Object

logger = logging.getLogger(__name__)

_PLUGIN_PREFIX = "medpatch.plugins."

# modules whose import registers the built-in names
_BUILTIN_MODULES = (
    "medpatch.models.unet",
    "medpatch.models.fcn",
    "medpatch.models.vgg",
    "medpatch.training.losses",
    "medpatch.preprocess",
    "medpatch.augment.spatial",
    "medpatch.augment.intensity",
    "medpatch.augment.kspace",
)


class Registry(Object):
    """
    Lookup table of registered architectures, losses, preprocessors and augmentations.

    Built-in modules are imported first, then every `<dir>/*/main.py` found on
    the colon-separated plugins path. Plugin files register names with the
    decorators from medpatch.decorators.
    """

    def __init__(self, plugins_path: Optional[str] = None):
        super().__init__()
        self._plugins_path = plugins_path
        self._entries: Optional[Dict[str, Dict[str, Callable]]] = None
        self._plugin_modules: List[str] = []

    def init(self) -> Result[None]:
        return self._ensure_loaded()

    def get_children_names(self, category: str) -> Result[List[str]]:
        res = self._ensure_loaded()
        if not res:
            return Result.error("Registry: error loading plugins", res)
        if category not in self._entries:
            return Result.error(f"Registry: unknown category '{category}', expected one of {list(CATEGORIES)}")
        return Ok(sorted(self._entries[category]))

    def get_metadata(self, category: str, name: str) -> Result[Dict[str, Any]]:
        res = self.get_children_names(category)
        if not res:
            return res
        if name not in self._entries[category]:
            return Result.error(
                f"Registry: '{name}' is not a registered {category}; known: {', '.join(res.unwrapped)}")
        obj = self._entries[category][name]
        return Ok({
            "registered-name": name,
            "object": obj,
            "module": getattr(obj, "__module__", None),
        })

    def get(self, category: str, name: str) -> Result[Callable]:
        res = self.get_metadata(category, name)
        if not res:
            return res
        return Ok(res.unwrapped["object"])

    def _ensure_loaded(self) -> Result[None]:
        if self._entries is not None:
            return Ok(None)

        for module_name in _BUILTIN_MODULES:
            try:
                importlib.import_module(module_name)
            except ImportError as e:
                return Result.error(f"Registry: could not import built-in module {module_name}", e)

        for plugins_dir in self._plugin_dirs():
            if not plugins_dir.is_dir():
                logger.warning("plugins directory %s does not exist", plugins_dir)
                continue
            for plugin_dir in sorted(plugins_dir.iterdir()):
                main_py = plugin_dir / "main.py"
                if not plugin_dir.is_dir() or not main_py.exists():
                    continue
                res = self._load_plugin(plugin_dir.name, main_py)
                if not res:
                    return res

        self._entries = {category: {name: fn for name, fn in pending(category).items() if self._owns(fn)}
                         for category in CATEGORIES}
        for category, table in self._entries.items():
            logger.debug("registered %s: %s", category, ", ".join(sorted(table)))
        return Ok(None)

    def _owns(self, fn: Callable) -> bool:
        # plugins loaded for another plugins path stay out of this table
        module = getattr(fn, "__module__", "") or ""
        if not module.startswith(_PLUGIN_PREFIX):
            return True
        return module in self._plugin_modules

    def _plugin_dirs(self) -> List[Path]:
        if not self._plugins_path:
            return []
        return [Path(p.strip()) for p in self._plugins_path.split(":") if p.strip()]

    def _load_plugin(self, plugin_name: str, main_py: Path) -> Result[None]:
        logger.info("loading plugin %s", main_py)
        try:
            spec = importlib.util.spec_from_file_location(f"{_PLUGIN_PREFIX}{plugin_name}.main", main_py)
            module = importlib.util.module_from_spec(spec)
            sys.modules[spec.name] = module
            spec.loader.exec_module(module)
            self._plugin_modules.append(spec.name)
        except Exception as e:
            return Result.error(f"Registry: could not load plugin {main_py}", e)
        return Ok(None)


_registries: Dict[Optional[str], Registry] = {}


def get_registry(plugins_path: Optional[str] = None) -> Result[Registry]:
    """Shared registry per plugins path."""
    if plugins_path not in _registries:
        res = Registry.create(plugins_path=plugins_path)
        if not res:
            return res
        _registries[plugins_path] = res.unwrapped
    return Ok(_registries[plugins_path])


def lookup(category: str, name: str, plugins_path: Optional[str] = None) -> Result[Callable]:
    res = get_registry(plugins_path)
    if not res:
        return res
    return res.unwrapped.get(category, name)
