"""Semantic versions and npm-style version constraints.

The third version component is called ``bug`` throughout (what semver calls
"patch"), so that "patch" stays free to mean a security fix.

Constraint *categories* are assigned from the leading sigil of the raw text
alone; the admitted version set lives in ``Constraint.intervals`` and follows
npm's range semantics (including caret narrowing below 1.0.0).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

__all__ = [
    "Version",
    "MalformedVersion",
    "NotAnUpgrade",
    "Ordering",
    "Category",
    "IncrementType",
    "Interval",
    "Constraint",
    "parse_version",
    "compare_versions",
    "parse_constraint",
    "satisfies",
    "increment_type",
]

PrereleaseId = Union[int, str]


class MalformedVersion(ValueError):
    def __init__(self, text: str, span: tuple[int, int], reason: str):
        self.text = text
        self.span = span
        self.reason = reason
        start, end = span
        super().__init__(f"malformed version {text!r} at [{start}:{end}]: {reason}")


class NotAnUpgrade(ValueError):
    pass


class Ordering(enum.IntEnum):
    LT = -1
    EQ = 0
    GT = 1


class Category(str, enum.Enum):
    EXACT = "Exact"
    BUG = "Bug"
    MINOR = "Minor"
    GEQ = "Geq"
    ANY = "Any"
    OTHER = "Other"


class IncrementType(str, enum.Enum):
    BUG = "bug"
    MINOR = "minor"
    MAJOR = "major"


def _pre_key(prerelease: tuple[PrereleaseId, ...]) -> tuple:
    # numeric identifiers sort below alphanumeric ones
    return tuple((0, p, "") if isinstance(p, int) else (1, 0, p) for p in prerelease)


@dataclass(frozen=True, eq=False)
class Version:
    major: int
    minor: int
    bug: int
    prerelease: tuple[PrereleaseId, ...] = ()
    build: str = ""
    _key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if min(self.major, self.minor, self.bug) < 0:
            raise ValueError("version components must be non-negative")
        object.__setattr__(self, "prerelease", tuple(self.prerelease))
        # releases sort above every prerelease of the same triple
        key = (self.major, self.minor, self.bug, 0 if self.prerelease else 1, _pre_key(self.prerelease))
        object.__setattr__(self, "_key", key)

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.major, self.minor, self.bug)

    @property
    def is_prerelease(self) -> bool:
        return bool(self.prerelease)

    def release(self) -> "Version":
        return Version(self.major, self.minor, self.bug)

    def __str__(self) -> str:
        text = f"{self.major}.{self.minor}.{self.bug}"
        if self.prerelease:
            text += "-" + ".".join(str(p) for p in self.prerelease)
        if self.build:
            text += "+" + self.build
        return text

    def __repr__(self) -> str:
        return f"Version({str(self)!r})"

    def __eq__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __lt__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self._key < other._key

    def __le__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self._key <= other._key

    def __gt__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self._key > other._key

    def __ge__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self._key >= other._key


_NUM = r"0|[1-9]\d*"
_PRE_ID = r"0|[1-9]\d*|\d*[A-Za-z-][0-9A-Za-z-]*"
_BUILD_ID = r"[0-9A-Za-z-]+"
_PRE = rf"(?:{_PRE_ID})(?:\.(?:{_PRE_ID}))*"
_BUILD = rf"{_BUILD_ID}(?:\.{_BUILD_ID})*"
_VERSION_RE = re.compile(
    rf"^[vV]?(?P<major>{_NUM})\.(?P<minor>{_NUM})\.(?P<bug>{_NUM})"
    rf"(?:-(?P<pre>{_PRE}))?(?:\+(?P<build>{_BUILD}))?$"
)


def _split_pre(pre: str | None) -> tuple[PrereleaseId, ...]:
    if not pre:
        return ()
    return tuple(int(p) if p.isdigit() else p for p in pre.split("."))


def _diagnose(text: str, offset: int) -> MalformedVersion:
    """Locate the first offending span of a non-conformant version."""
    pos = 1 if text[:1] in ("v", "V") else 0
    for name in ("major", "minor", "bug"):
        if name != "major":
            if text[pos : pos + 1] != ".":
                span = (offset + pos, offset + len(text))
                return MalformedVersion(text, span, f"expected '.{name}'")
            pos += 1
        m = re.match(r"\d+", text[pos:])
        if m is None:
            return MalformedVersion(text, (offset + pos, offset + len(text)), f"expected numeric {name}")
        if len(m.group()) > 1 and m.group().startswith("0"):
            end = pos + len(m.group())
            return MalformedVersion(text, (offset + pos, offset + end), f"leading zero in {name}")
        pos += len(m.group())
    rest = text[pos:]
    if rest[:1] == "-":
        m = re.match(rf"-(?:{_PRE})", rest)
        if m is None:
            return MalformedVersion(text, (offset + pos, offset + len(text)), "bad prerelease")
        pos += len(m.group())
        rest = text[pos:]
    if rest[:1] == "+":
        m = re.match(rf"\+{_BUILD}$", rest)
        if m is None:
            return MalformedVersion(text, (offset + pos, offset + len(text)), "bad build metadata")
        pos = len(text)
    return MalformedVersion(text, (offset + pos, offset + len(text)), "unexpected trailing text")


@lru_cache(maxsize=1 << 16)
def _parse_version_cached(text: str) -> Version:
    stripped = text.strip()
    m = _VERSION_RE.match(stripped)
    if m is None:
        raise _diagnose(stripped, len(text) - len(text.lstrip()))
    return Version(
        int(m["major"]),
        int(m["minor"]),
        int(m["bug"]),
        _split_pre(m["pre"]),
        m["build"] or "",
    )


def parse_version(text: str | Version) -> Version:
    """Parse a semver string. Surrounding whitespace and a ``v`` prefix are tolerated."""
    if isinstance(text, Version):
        return text
    if not isinstance(text, str):
        raise MalformedVersion(repr(text), (0, 0), "not a string")
    return _parse_version_cached(text)


def compare_versions(a: Version | str, b: Version | str) -> Ordering:
    ka, kb = parse_version(a)._key, parse_version(b)._key
    if ka < kb:
        return Ordering.LT
    return Ordering.GT if ka > kb else Ordering.EQ


def increment_type(a: Version | str, b: Version | str) -> IncrementType:
    a, b = parse_version(a), parse_version(b)
    if not a < b:
        raise NotAnUpgrade(f"{a} -> {b} is not an upgrade")
    if a.major != b.major:
        return IncrementType.MAJOR
    if a.minor != b.minor:
        return IncrementType.MINOR
    return IncrementType.BUG


# --------------------------------------------------------------------------
# Constraints


@dataclass(frozen=True)
class Interval:
    """Version interval; ``None`` bounds are unbounded.

    ``prerelease_triples`` lists the major.minor.bug triples for which
    prerelease versions may match (npm's opt-in rule).
    """

    lo: Version | None = None
    hi: Version | None = None
    lo_inclusive: bool = True
    hi_inclusive: bool = False
    prerelease_triples: frozenset = frozenset()

    def contains(self, v: Version) -> bool:
        if self.lo is not None:
            if v < self.lo or (v == self.lo and not self.lo_inclusive):
                return False
        if self.hi is not None:
            if v > self.hi or (v == self.hi and not self.hi_inclusive):
                return False
        return True

    def is_empty(self) -> bool:
        if self.lo is None or self.hi is None:
            return False
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and not (self.lo_inclusive and self.hi_inclusive)

    def intersect(self, other: "Interval") -> "Interval":
        lo, lo_inc = self.lo, self.lo_inclusive
        if other.lo is not None and (
            lo is None or other.lo > lo or (other.lo == lo and not other.lo_inclusive)
        ):
            lo, lo_inc = other.lo, other.lo_inclusive
        hi, hi_inc = self.hi, self.hi_inclusive
        if other.hi is not None and (
            hi is None or other.hi < hi or (other.hi == hi and not other.hi_inclusive)
        ):
            hi, hi_inc = other.hi, other.hi_inclusive
        return Interval(lo, hi, lo_inc, hi_inc, self.prerelease_triples | other.prerelease_triples)

    def __str__(self) -> str:
        left = ("[" if self.lo_inclusive else "(") + (str(self.lo) if self.lo else "-inf")
        right = (str(self.hi) if self.hi else "+inf") + ("]" if self.hi_inclusive else ")")
        return f"{left}, {right}"


@dataclass(frozen=True)
class Constraint:
    raw: str
    category: Category
    intervals: tuple[Interval, ...] = ()
    # set when the text is not a parseable npm range (URL, tag, garbage)
    diagnostic: str | None = None

    @property
    def has_intervals(self) -> bool:
        return bool(self.intervals)

    def __str__(self) -> str:
        return self.raw


_XR = r"[xX*]|0|[1-9]\d*"
_OPS = r"<=|>=|<|>|=|~>|~|\^"
_COMPARATOR_RE = re.compile(
    rf"^(?P<op>{_OPS})?[vV]?(?P<major>{_XR})"
    rf"(?:\.(?P<minor>{_XR})(?:\.(?P<bug>{_XR})(?:-(?P<pre>{_PRE}))?(?:\+(?P<build>{_BUILD}))?)?)?$"
)
_OP_SPACE_RE = re.compile(rf"({_OPS})\s+")
_HYPHEN_RE = re.compile(r"^(\S+)\s+-\s+(\S+)$")
_ANY_TEXT = frozenset({"", "*", "x", "X"})
_FULL_TRIPLE_RE = re.compile(rf"^[vV]?(?:{_NUM})\.(?:{_NUM})\.(?:{_NUM})(?:-{_PRE})?(?:\+{_BUILD})?$")


class _RangeSyntaxError(ValueError):
    pass


def _is_x(part: str | None) -> bool:
    return part is None or part in ("x", "X", "*")


def _comparator_parts(text: str):
    m = _COMPARATOR_RE.match(text)
    if m is None:
        raise _RangeSyntaxError(f"cannot parse comparator {text!r}")
    op = m["op"] or ""
    if op == "~>":
        op = "~"
    parts = [m["major"], m["minor"], m["bug"]]
    # anything after the first wildcard is a wildcard too
    for i, p in enumerate(parts):
        if _is_x(p):
            parts[i:] = [None] * (3 - i)
            break
    pre = _split_pre(m["pre"])
    if pre and parts[2] is None:
        raise _RangeSyntaxError(f"prerelease on partial version {text!r}")
    nums = [int(p) if p is not None else None for p in parts]
    return op, nums, pre


def _v(major: int, minor: int = 0, bug: int = 0, pre=()) -> Version:
    return Version(major, minor, bug, pre)


def _comparator_interval(text: str) -> Interval:
    op, (M, m, p), pre = _comparator_parts(text)
    triples = frozenset({(M, m, p)}) if pre else frozenset()
    if M is None:
        if op in ("<", ">"):
            return Interval(_v(0), _v(0), True, False)  # matches nothing
        return Interval()
    if m is None:
        floor, ceil = _v(M), _v(M + 1)
    elif p is None:
        floor, ceil = _v(M, m), _v(M, m + 1)
    else:
        floor = ceil = _v(M, m, p, pre)

    if op == "^":
        if M > 0 or m is None:
            hi = _v(M + 1)
        elif m > 0 or p is None:
            hi = _v(0, m + 1)
        else:
            hi = _v(0, 0, p + 1)
        return Interval(floor, hi, True, False, triples)
    if op == "~":
        hi = _v(M + 1) if m is None else _v(M, m + 1)
        return Interval(floor, hi, True, False, triples)

    exact = p is not None
    if op in ("", "="):
        if exact:
            return Interval(floor, floor, True, True, triples)
        return Interval(floor, ceil, True, False)
    if op == ">=":
        return Interval(floor, None, True, False, triples)
    if op == ">":
        if exact:
            return Interval(floor, None, False, False, triples)
        return Interval(ceil, None, True, False)
    if op == "<":
        return Interval(None, floor, True, False, triples)
    if op == "<=":
        if exact:
            return Interval(None, floor, True, True, triples)
        return Interval(None, ceil, True, False)
    raise _RangeSyntaxError(f"unknown operator {op!r}")


def _hyphen_interval(left: str, right: str) -> Interval:
    lop, (M, m, p), lpre = _comparator_parts(left)
    rop, (N, n, q), rpre = _comparator_parts(right)
    if lop or rop:
        raise _RangeSyntaxError("operators are not allowed inside hyphen ranges")
    triples = set()
    lo = None
    if M is not None:
        lo = _v(M, m or 0, p or 0, lpre)
        if lpre:
            triples.add((M, m, p))
    hi, hi_inc = None, False
    if N is not None:
        if n is None:
            hi = _v(N + 1)
        elif q is None:
            hi = _v(N, n + 1)
        else:
            hi, hi_inc = _v(N, n, q, rpre), True
            if rpre:
                triples.add((N, n, q))
    return Interval(lo, hi, True, hi_inc, frozenset(triples))


def _comparator_set(text: str) -> Interval | None:
    text = _OP_SPACE_RE.sub(r"\1", text.strip())
    h = _HYPHEN_RE.match(text)
    if h:
        iv = _hyphen_interval(h.group(1), h.group(2))
    else:
        iv = Interval()
        for token in text.split():
            iv = iv.intersect(_comparator_interval(token))
    return None if iv.is_empty() else iv


def _range_intervals(raw: str) -> tuple[Interval, ...]:
    out = []
    for part in raw.split("||"):
        iv = _comparator_set(part)
        if iv is not None:
            out.append(iv)
    return tuple(out)


def _categorize(raw: str) -> Category:
    if raw in _ANY_TEXT:
        return Category.ANY
    if "||" in raw:
        return Category.OTHER
    single = _OP_SPACE_RE.sub(r"\1", raw)
    if any(c.isspace() for c in single):
        return Category.OTHER
    m = re.match(r"^(>=|~>|~|\^|=)?(.*)$", single)
    op, rest = m.group(1), m.group(2)
    if op is None or op == "=":
        return Category.EXACT if _FULL_TRIPLE_RE.match(rest) else Category.OTHER
    try:
        _comparator_parts(single)
    except _RangeSyntaxError:
        return Category.OTHER
    return {">=": Category.GEQ, "~": Category.BUG, "~>": Category.BUG, "^": Category.MINOR}[op]


@lru_cache(maxsize=1 << 17)
def _parse_constraint_cached(text: str) -> Constraint:
    raw = text.strip()
    category = _categorize(raw)
    try:
        intervals = _range_intervals(raw)
        diagnostic = None
    except _RangeSyntaxError as exc:
        intervals, diagnostic = (), str(exc)
    return Constraint(text, category, intervals, diagnostic)


def parse_constraint(text: str | Constraint) -> Constraint:
    """Parse a dependency constraint. Never raises; unknown syntax is ``Other``."""
    if isinstance(text, Constraint):
        return text
    if not isinstance(text, str):
        return Constraint(str(text), Category.OTHER, (), "not a string")
    return _parse_constraint_cached(text)


def satisfies(v: Version | str, c: Constraint | str) -> bool:
    v = parse_version(v)
    if not isinstance(c, Constraint):
        c = parse_constraint(c)
    for iv in c.intervals:
        if iv.contains(v) and (not v.prerelease or v.triple in iv.prerelease_triples):
            return True
    return False
