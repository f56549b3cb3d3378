"""Exact money values.

All amounts are :class:`fractions.Fraction` instances.  Floats are accepted at
the boundary only and are converted through their shortest decimal repr, so
``money(0.165) == Fraction(33, 200)``.
"""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Union

Money = Fraction
MoneyLike = Union[Fraction, int, str, float, Decimal]

ZERO = Fraction(0)


def money(value: MoneyLike) -> Fraction:
    """Coerce ``value`` to an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a money value")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, (str, Decimal)):
        return Fraction(str(value).strip())
    raise TypeError(f"cannot interpret {type(value).__name__} as money")


def nonneg(value: MoneyLike, what: str = "amount") -> Fraction:
    v = money(value)
    if v < 0:
        raise ValueError(f"{what} must be >= 0, got {fmt(v)}")
    return v


def fmt(value: Fraction) -> str:
    """Canonical text form used in traces and CSVs: ``"33/200"`` or ``"2"``."""
    value = money(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def to_decimal_str(value: Fraction, places: int = 6) -> str:
    """Human-readable decimal rendering (rounded half-even; display only)."""
    q = Decimal(value.numerator) / Decimal(value.denominator)
    return str(q.quantize(Decimal(1).scaleb(-places)))


def quantize_down(value: Fraction, quantum: Fraction) -> Fraction:
    """Largest multiple of ``quantum`` not exceeding ``value``."""
    quantum = money(quantum)
    if quantum <= 0:
        raise ValueError("quantum must be positive")
    return (money(value) // quantum) * quantum


def is_integral(value: Fraction) -> bool:
    return money(value).denominator == 1
