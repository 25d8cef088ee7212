from __future__ import annotations


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments that violate its preconditions."""


class TraceParseError(ValueError):
    """Malformed trace file. ``line`` is 1-based and counts the header."""

    def __init__(self, path: str, line: int, reason: str) -> None:
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class ConfigError(ValueError):
    """Experiment configuration rejected; ``field`` names the offending key."""

    def __init__(self, field: str, reason: str) -> None:
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason
