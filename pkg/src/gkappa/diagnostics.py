"""Diagnostics shared by every stage of the toolchain."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    line: int = 0
    col: int = 0
    file: str | None = None

    @property
    def is_error(self) -> bool:
        return self.severity == ERROR

    def located(self, file: str | None) -> "Diagnostic":
        return Diagnostic(self.severity, self.message, self.line, self.col, file)

    def __str__(self) -> str:
        return f"{self.file or '<input>'}:{self.line}:{self.col}: {self.severity}: {self.message}"


class ModelError(Exception):
    """Raised when a model cannot be processed; carries every diagnostic found."""

    def __init__(self, diagnostics: Iterable[Diagnostic], kind: str | None = None):
        self.diagnostics = list(diagnostics)
        self.kind = kind
        super().__init__("\n".join(str(d) for d in self.diagnostics))


def error(message: str, line: int = 0, col: int = 0) -> Diagnostic:
    return Diagnostic(ERROR, message, line, col)


def warning(message: str, line: int = 0, col: int = 0) -> Diagnostic:
    return Diagnostic(WARNING, message, line, col)


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)
