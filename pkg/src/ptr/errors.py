"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1 (handled by the
argument parser), ``SpecError`` / ``DataError`` and their subclasses exit 2,
``NumericError`` exits 3.
"""

from __future__ import annotations


class PtrError(Exception):
    """Base class for all errors raised by this package."""


class SpecError(PtrError, ValueError):
    """A rule-language source could not be parsed or is structurally invalid.

    Carries an optional (line, column) pair pointing at the offending token.
    """

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(message)

    def __str__(self) -> str:
        if self.line is not None:
            return f"line {self.line}, col {self.col}: {self.message}"
        return self.message


class CompileError(PtrError, ValueError):
    """A task spec failed validation and cannot be compiled into a schema."""


class DataError(PtrError, ValueError):
    """Malformed instance data: bad spans, missing fields, unknown tokens."""


class RenderError(DataError):
    """An instance cannot be rendered into the prompt template."""


class NumericError(PtrError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""
