from __future__ import annotations

from fractions import Fraction
from numbers import Rational


def as_fraction(x) -> Fraction:
    """Exact rational for ints, fractions, decimal strings and floats.

    Floats go through their shortest repr, so ``0.1`` becomes ``1/10``
    rather than the binary expansion.
    """
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot convert {type(x).__name__} to an exact fraction")

