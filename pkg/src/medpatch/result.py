"""Rust-like Result[T]: Ok carries a value, Err an error chain built with Result.error."""

import traceback
from abc import abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Generic, Optional, TypeVar, Union


def as_tree(obj: Any) -> Any:
    """Convert an object (errors, results, containers) to plain dict/list/scalars."""
    if hasattr(obj, "as_tree"):
        return obj.as_tree

    match obj:
        case dict():
            return {key: as_tree(value) for key, value in obj.items()}
        case list():
            return [as_tree(value) for value in obj]
        case tuple():
            return str(obj)
        case int() | float() | str() | bool() | None:
            return obj
        case _:
            return str(obj)


def _adapt_error(value: Optional[Union[str, dict, list, Exception, "Error", "Err"]]) -> Optional[Union[str, dict, list, "Error"]]:
    """Normalize anything usable as an error payload"""
    if value is None:
        return None
    match value:
        case Error() | str() | dict():
            return value
        case list():
            if any(isinstance(item, (Error, Err, Exception, str, dict)) for item in value):
                return [_adapt_error(item) for item in value]
            return value
        case Exception():
            stack = traceback.format_tb(value.__traceback__) if value.__traceback__ else None
            return {
                "type": type(value).__name__,
                "message": str(value),
                "module": getattr(type(value), "__module__", None),
                "stack": stack,
            }
        case Err():
            return value.error
        case _:
            return {
                "message": "unknown type provided for Error constructor",
                "type": type(value).__name__, "value": str(value)}


class Error:
    """Node of an error chain: a payload plus the error that caused it."""

    def __init__(self, error: Union[str, dict, list, "Error"], prev_error: Optional[Union[str, dict, list, "Error"]] = None):
        self._error = error
        self._prev_error = prev_error

    @property
    def error(self):
        return self._error

    @property
    def as_tree(self) -> dict:
        """Convert the error chain to a tree of plain values."""
        return {
            "error": as_tree(self._error),
            "prev_error": as_tree(self._prev_error),
        }

    @property
    def kind(self) -> Optional[str]:
        """Name of the first exception type found walking down the chain.

        Used to branch on the error category, e.g. "ConfigError" or "ParseError".
        """
        for payload in self._walk():
            if isinstance(payload, dict) and "type" in payload and "stack" in payload:
                return payload["type"]
        return None

    @property
    def messages(self) -> list[str]:
        """Human readable messages from outermost to innermost."""
        out = []
        for payload in self._walk():
            if isinstance(payload, str):
                out.append(payload)
            elif isinstance(payload, dict) and "message" in payload:
                out.append(str(payload["message"]))
        return out

    def _walk(self):
        stack = [self]
        while stack:
            node = stack.pop(0)
            if isinstance(node, Error):
                stack.insert(0, node._prev_error)
                stack.insert(0, node._error)
            elif isinstance(node, list):
                stack[0:0] = node
            elif node is not None:
                yield node

    def __repr__(self):
        return f"Error({self._error!r}, prev_error={self._prev_error!r})"

    def __str__(self):
        return " <- ".join(self.messages)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Error):
            return False
        return self._error == other._error and self._prev_error == other._prev_error

    @classmethod
    def create(cls, value: Union[str, dict, list, Exception, "Error", "Err"], prev_error: Optional[Union[str, dict, list, Exception, "Error", "Err"]] = None) -> "Error":
        """Create an Error instance with the given value and optional previous error."""
        return cls(_adapt_error(value), _adapt_error(prev_error))


T = TypeVar("T")
U = TypeVar("U")


class Result(Generic[T]):
    """Base class for Ok and Err"""

    def __bool__(self) -> bool:
        return self.is_ok

    @property
    @abstractmethod
    def is_ok(self) -> bool:
        """True for Ok, False for Err."""

    @property
    @abstractmethod
    def unwrapped(self) -> T:
        """The Ok value. On Err returns a new Err wrapping this one, it never raises."""

    @classmethod
    def error(
        cls,
        err: Union[Error, str, list, dict, Exception],
        prev_error: Optional[Union["Result", Error, "Err", Exception]] = None,
    ) -> "Result[T]":
        """Create an Err result, chaining an optional cause.

        Usage:
            res = read_image(path)
            if not res:
                return Result.error(f"could not load subject {sid}", res)
            try:
                value = parse(...)
            except ParseError as e:
                return Result.error(f"malformed header in {path}", e)
        """
        return Err.create(err, prev_error)

    def and_then(self, func: Callable[[T], "Result[U]"]) -> "Result[U]":
        """Chain operations that return Results."""
        if self.is_ok:
            return func(self.unwrapped)
        return self  # type: ignore

    def map(self, func: Callable[[T], U]) -> "Result[U]":
        """Transform Ok values, pass through Err unchanged."""
        if self.is_ok:
            return Ok(func(self.unwrapped))
        return self  # type: ignore

    def unwrap_or(self, default: T) -> T:
        return self.unwrapped if self.is_ok else default

    def expect(self, message: str) -> T:
        """Return the Ok value or raise RuntimeError carrying the error chain.

        For tests and scripts where a failure should stop everything.
        """
        if self.is_ok:
            return self.unwrapped
        raise RuntimeError(f"{message}: {self.error}")  # type: ignore


@dataclass(frozen=True)
class Ok(Result[T]):
    _value: T

    @property
    def is_ok(self) -> bool:
        return True

    @property
    def unwrapped(self) -> T:
        return self._value

    @property
    def as_tree(self) -> dict:
        return {"value": as_tree(self._value)}


@dataclass(frozen=True)
class Err(Result[T]):
    _error: Error

    def __post_init__(self):
        if not isinstance(self._error, Error):
            object.__setattr__(self, '_error', Error.create(self._error))

    @property
    def is_ok(self) -> bool:
        return False

    @property
    def error(self) -> Error:
        return self._error

    @property
    def kind(self) -> Optional[str]:
        return self._error.kind

    @property
    def unwrapped(self) -> T:
        return Err.create("Cannot unwrap an Err Result", self)

    @property
    def as_tree(self) -> dict:
        return {"error": self._error.as_tree}

    def __repr__(self) -> str:
        return f"Err({self._error!r})"

    @classmethod
    def create(
        cls,
        error: Union[Error, str, dict, list, Exception],
        prev_error: Optional[Union[Error, str, dict, list, Exception, "Err"]] = None,
    ) -> "Err[T]":
        """Create an Err result with chained error tree structure"""
        return cls(_error=Error.create(error, prev_error))
