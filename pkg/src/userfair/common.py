"""Shared error types and the undefined-score marker."""

from __future__ import annotations

import math


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class UndefinedError(ArithmeticError):
    """A statistic is mathematically undefined for the given input."""


class _Undefined:
    _instance: "_Undefined | None" = None

    def __new__(cls) -> "_Undefined":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "undefined"

    __str__ = __repr__

    def __bool__(self) -> bool:
        return False

    def __reduce__(self):
        return (_Undefined, ())


UNDEFINED = _Undefined()


def is_undefined(value) -> bool:
    """True for the UNDEFINED marker, its string sentinel, None and NaN."""
    if value is UNDEFINED or value is None:
        return True
    if isinstance(value, str):
        return value == "undefined"
    try:
        return math.isnan(value)
    except TypeError:
        return False


def encode_value(value):
    """JSON/CSV-safe encoding: UNDEFINED becomes the ``"undefined"`` sentinel."""
    if is_undefined(value):
        return "undefined"
    return float(value)


def decode_value(value):
    if is_undefined(value):
        return UNDEFINED
    return float(value)


def format_value(value) -> str:
    """Shortest round-trip text form used in CSV exports."""
    if is_undefined(value):
        return "undefined"
    return repr(float(value))
