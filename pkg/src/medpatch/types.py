"""
Base types shared by every medpatch component
"""

import random
import re
import string
from abc import ABC, abstractmethod

from .result import Result, Ok


def spinalcase(text: str) -> str:
    """
    Convert string to spinal-case (kebab-case).

    Examples:
        FoldRunner -> fold-runner
        snake_case -> snake-case
    """
    if not text:
        return text
    text = text.replace('_', '-')
    text = re.sub('([a-z0-9])([A-Z])', r'\1-\2', text)
    text = re.sub('-+', '-', text.lower())
    return text.strip('-')


def gen_uid() -> str:
    return ''.join(random.choices(string.ascii_lowercase + string.digits, k=10))


class Object(ABC):
    """
    Base of every long-lived component (queues, runners, registries, dispatchers).

    1. instances are created with the create() classmethod, never the constructor
    2. create() calls the constructor, which only stores arguments,
       then init(), which does the fallible work and returns a Result
    3. each instance carries a unique id: spinal-case class name plus random suffix
    4. dispose() releases whatever init() acquired
    """
    def __init__(self):
        self._uid = f"{spinalcase(self.__class__.__name__)}-{gen_uid()}"

    @property
    def uid(self):
        return self._uid

    @abstractmethod
    def init(self) -> Result[None]:
        """Initialize the object - called after __init__ by create()"""

    def dispose(self) -> Result[None]:
        return Ok(None)

    @classmethod
    def create(cls, *args, **kwargs) -> Result["Object"]:
        try:
            obj = cls(*args, **kwargs)
        except Exception as e:
            return Result.error(f"failed to construct instance {cls.__name__}", e)

        res = obj.init()
        if not res:
            return Result.error(f"failed to initialize instance {cls.__name__}", res)
        return Ok(obj)


class EventHandler(ABC):
    """
    Interface for objects that handle events from the dispatcher.
    Events are fire-and-forget (no required responder).
    """

    @abstractmethod
    def handle_event(self, event: dict) -> Result[None]:
        """
        Args:
            event: dict with
                - "source": emitting component, e.g. "queue"
                - "name": event name, e.g. "buffered"
                - "data": optional payload
        """
