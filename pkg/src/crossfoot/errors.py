"""Exception hierarchy and process exit codes."""
from __future__ import annotations

from enum import IntEnum


class ExitStatus(IntEnum):
    """Exit codes of the command-line tool."""

    CLEAN = 0
    FINDINGS = 1  # findings at or above --fail-on
    ERROR = 2  # usage, parse or I/O error


class CrossfootError(Exception):
    """Base class for every error raised by crossfoot."""


class AddressParseError(CrossfootError, ValueError):
    """A cell reference does not follow the A1 grammar."""

    def __init__(self, token: str, reason: str = "not an A1 cell reference") -> None:
        super().__init__(f"Invalid cell reference {token!r}: {reason}")
        self.token = token


class FormulaParseError(CrossfootError, ValueError):
    """A formula could not be tokenized or parsed."""

    def __init__(self, message: str, column: int) -> None:
        super().__init__(f"{message} (column {column})")
        self.column = column


class LoadError(CrossfootError):
    """A canonical workbook document is malformed."""

    def __init__(self, message: str, location: str | None = None) -> None:
        text = f"{location}: {message}" if location else message
        super().__init__(text)
        self.location = location


class IngestError(CrossfootError):
    """An XLSX archive cannot be read."""

    def __init__(self, message: str, part: str | None = None) -> None:
        text = f"{part}: {message}" if part else message
        super().__init__(text)
        self.part = part


class UnsupportedRangeError(CrossfootError):
    """A range cannot be enumerated (cross-sheet or dynamic endpoints)."""


class CheckGenerationError(CrossfootError):
    """A check formula cannot be generated for a table."""


class PatchApplyError(CrossfootError):
    """One or more patches cannot be applied; nothing was applied."""

    def __init__(self, problems: list[str]) -> None:
        super().__init__("Cannot apply patches: " + "; ".join(problems))
        self.problems = problems


class ConfigError(CrossfootError):
    """An audit configuration file is invalid."""


class ManifestError(CrossfootError):
    """A governance manifest document is malformed."""
