"""Small text-output helpers shared by the CSV writers."""

from __future__ import annotations

import math


def sig9(x: float) -> str:
    """Format a float with 9 significant digits (CSV convention)."""
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TypeError(f"expected a number, got {type(x).__name__}")
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def flag(value: bool) -> str:
    return "true" if value else "false"


def parse_flag(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1"):
        return True
    if lowered in ("false", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")
