"""Small parsing helpers shared by the CLI and config loaders."""

import math
from fractions import Fraction

from .errors import InputError


def parse_number(text) -> float:
    """Parse ``'0.25'``, ``'1/4'`` or a number into a finite float."""
    if isinstance(text, (int, float)):
        value = float(text)
    else:
        try:
            value = float(Fraction(str(text).strip()))
        except (ValueError, ZeroDivisionError):
            raise InputError("not a number: %r" % (text,)) from None
    if not math.isfinite(value):
        raise InputError("not a finite number: %r" % (text,))
    return value


def parse_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [parse_number(v) for v in text]
    return [parse_number(v) for v in str(text).split(",") if v.strip()]


def parse_range(text) -> list:
    """``start:stop:step`` (inclusive of ``stop`` up to rounding) or a comma list."""
    text = str(text)
    if ":" not in text:
        return parse_list(text)
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError("range must be start:stop:step, got %r" % text)
    start, stop, step = (parse_number(p) for p in parts)
    if step <= 0 or stop < start:
        raise InputError("bad range %r" % text)
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(n)]
