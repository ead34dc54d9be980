#!/usr/bin/env python3
"""
Error types shared by the sedlab modules.
"""

from typing import Optional


class SedLabError(Exception):
    """Base class for every error raised by sedlab"""


class ParameterError(SedLabError, ValueError):
    """An argument violates an operation's precondition"""


class DataFormatError(SedLabError, ValueError):
    """A dataset file could not be parsed"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}"
            if line is not None:
                prefix += f", line {line}"
            prefix += ": "
        super().__init__(f"{prefix}{message}")


class NumericError(SedLabError, ArithmeticError):
    """Non-finite values appeared in inputs, activations or gradients"""


class ConfigError(SedLabError, ValueError):
    """A run configuration is missing, malformed or violates a constraint"""

    def __init__(self, message: str, key: Optional[str] = None, constraint: Optional[str] = None):
        self.key = key
        self.constraint = constraint
        super().__init__(message)


class RunStoreError(SedLabError, OSError):
    """Reading or writing a run directory failed"""
