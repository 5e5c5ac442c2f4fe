"""
Registration decorators.

Built-in modules and plugin files decorate their builders with these; the
Registry collects the pending tables when it loads.

    @architecture("resunet")
    def build_resunet(spec, seed): ...

    @loss
    def dice(pred, target): ...      # registered as "dice"
"""

from typing import Callable, Dict

from medpatch.types import spinalcase

CATEGORIES = ("architecture", "loss", "preprocessor", "augmentation")

_pending: Dict[str, Dict[str, Callable]] = {category: {} for category in CATEGORIES}


def _registering(category: str) -> Callable:
    table = _pending[category]

    def register(name_or_obj=None):
        def decorator(obj):
            key = name_or_obj if isinstance(name_or_obj, str) else spinalcase(obj.__name__).replace("-", "_")
            table[key] = obj
            return obj
        if name_or_obj is None or isinstance(name_or_obj, str):
            return decorator
        return decorator(name_or_obj)

    register.__name__ = category
    return register


architecture = _registering("architecture")
loss = _registering("loss")
preprocessor = _registering("preprocessor")
augmentation = _registering("augmentation")


def pending(category: str) -> Dict[str, Callable]:
    return dict(_pending[category])
