"""UTC timestamp helpers.

Every timestamp in the toolkit is a timezone-aware ``datetime`` in UTC,
truncated to millisecond precision. Serialization is always RFC3339 with a
``Z`` suffix and exactly three fractional digits.
"""

from __future__ import annotations

import re
from datetime import datetime, timedelta, timezone

DAY = timedelta(days=1)

_RFC3339 = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[Tt ](\d{2}):(\d{2}):(\d{2})(?:\.(\d+))?"
    r"(Z|z|[+-]\d{2}:?\d{2})?$"
)
_DATE_ONLY = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")


def _truncate_ms(dt: datetime) -> datetime:
    return dt.replace(microsecond=dt.microsecond - dt.microsecond % 1000)


def from_millis(ms: int) -> datetime:
    return datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(milliseconds=ms)


def to_millis(dt: datetime) -> int:
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def parse_timestamp(value: str | int | float | datetime) -> datetime:
    """Parse RFC3339 text, a bare date, or integer unix milliseconds.

    Naive datetimes and offset-less strings are taken to be UTC.
    Raises ValueError on anything else.
    """
    if isinstance(value, datetime):
        if value.tzinfo is None:
            value = value.replace(tzinfo=timezone.utc)
        return _truncate_ms(value.astimezone(timezone.utc))
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        return from_millis(int(value))
    if not isinstance(value, str):
        raise ValueError(f"not a timestamp: {value!r}")
    text = value.strip()
    if text.isdigit():
        return from_millis(int(text))
    m = _RFC3339.match(text)
    if m is None:
        d = _DATE_ONLY.match(text)
        if d is None:
            raise ValueError(f"not a timestamp: {value!r}")
        y, mo, da = (int(x) for x in d.groups())
        return datetime(y, mo, da, tzinfo=timezone.utc)
    y, mo, da, h, mi, s = (int(x) for x in m.groups()[:6])
    frac, zone = m.group(7), m.group(8)
    micros = int((frac or "0")[:6].ljust(6, "0"))
    tz = timezone.utc
    if zone and zone not in ("Z", "z"):
        sign = 1 if zone[0] == "+" else -1
        digits = zone[1:].replace(":", "")
        tz = timezone(sign * timedelta(hours=int(digits[:2]), minutes=int(digits[2:])))
    try:
        dt = datetime(y, mo, da, h, mi, s, micros, tzinfo=tz)
    except ValueError as exc:
        raise ValueError(f"not a timestamp: {value!r}") from exc
    return _truncate_ms(dt.astimezone(timezone.utc))


def format_timestamp(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def utcnow() -> datetime:
    return _truncate_ms(datetime.now(timezone.utc))


def days_between(start: datetime, end: datetime) -> float:
    return (end - start) / DAY
