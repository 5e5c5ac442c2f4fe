"""
Exception types raised by numeric kernels and value types.

Orchestration code catches these at its boundary and wraps them into
Result errors, see medpatch.result.
"""

from typing import Optional, Sequence


class MedpatchError(Exception):
    """Base class for every error raised inside medpatch."""


class ConfigError(MedpatchError):
    """Invalid parameter or configuration value."""


class DimensionError(MedpatchError):
    """Shape, extent or axis mismatch."""


class DegenerateInputError(MedpatchError):
    """Input for which the operation has no defined result (constant image, empty region)."""


class ContractError(MedpatchError):
    """Caller broke an API precondition (stale tape, multi-channel k-space input...)."""


class FormatError(MedpatchError):
    """Well-formed file using a feature that is not supported."""


class ParseError(MedpatchError):
    """Malformed input document.

    Args:
        message: what went wrong
        offset: byte offset into a binary/text header, if known
        line: 1-based line number in a text document, if known
    """

    def __init__(self, message: str, offset: Optional[int] = None, line: Optional[int] = None):
        where = []
        if offset is not None:
            where.append(f"byte {offset}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.line = line


class ValidationError(MedpatchError):
    """One or more items failed validation; all offending items are listed."""

    def __init__(self, message: str, items: Sequence = ()):
        self.items = list(items)
        if self.items:
            message = f"{message}: {', '.join(str(i) for i in self.items)}"
        super().__init__(message)
