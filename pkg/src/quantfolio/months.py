"""Year-month arithmetic.

Every date in the engine is month-granular. Internally a month is the
integer ``year * 12 + (month - 1)`` so consecutive calendar months differ
by exactly one; the wire format is ``YYYY-MM``.
"""

import re

_YM_RE = re.compile(r"^(\d{4})-(\d{2})$")


def parse_month(text: str) -> int:
    """Parse ``YYYY-MM`` into a month index."""
    m = _YM_RE.match(text.strip())
    if not m:
        raise ValueError(f"invalid year-month {text!r}, expected YYYY-MM")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range in {text!r}")
    return year * 12 + (month - 1)


def format_month(index: int) -> str:
    year, month = divmod(int(index), 12)
    return f"{year:04d}-{month + 1:02d}"


def as_month(value) -> int:
    """Accept either a ``YYYY-MM`` string or an already-parsed index."""
    if isinstance(value, str):
        return parse_month(value)
    return int(value)
