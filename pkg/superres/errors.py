"""Exception hierarchy for the super-resolution crossbar simulator.

Every error raised on purpose by the library derives from ``SuperResError`` so the
CLI can tell simulation failures apart from bugs. Where a builtin fits the meaning
(ValueError, OverflowError) the class derives from it as well.
"""

from typing import Optional


class SuperResError(Exception):
    """Base class for all simulator errors."""


class DomainError(SuperResError, ValueError):
    """An argument lies outside the domain of the operation."""


class LevelRangeError(SuperResError, OverflowError):
    """A level count would not fit the supported integer range."""


class EnumerationTooLargeError(SuperResError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"Enumeration of {count} node level combinations exceeds the cap of {cap}; "
            f"use the count-only path or raise the cap"
        )


class InfeasibleError(SuperResError):
    """No configuration can satisfy the request."""


class AgingCollapseError(SuperResError):
    """Aging closed the programmable conductance window."""


class DegeneratePathError(SuperResError):
    """A series current path contains a zero conductance."""


class DimensionMismatchError(SuperResError, ValueError):
    """Array shapes do not line up."""


class OverlappingPairsError(SuperResError, ValueError):
    """Differential column pairs reuse a physical column."""


class WeightsFormatError(SuperResError, ValueError):
    """A weights fixture file is malformed."""


class ConfigError(SuperResError, ValueError):
    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")
