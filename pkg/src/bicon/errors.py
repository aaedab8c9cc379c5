"""Shared exception types.

The CLI maps these onto exit codes: usage/config problems exit 1, data
problems exit 2, failed self-checks exit 3.
"""


class BiconError(Exception):
    """Base class for package errors."""


class ShapeError(BiconError, ValueError):
    """Operand shapes are incompatible; message names both shapes."""


class ConfigError(BiconError, ValueError):
    """A configuration value is out of range or inconsistent."""


class DataError(BiconError, ValueError):
    """An input sentence or dataset record is unusable."""
