"""Single-node metadata store.

Package metadata and advisories are persisted as an append-only NDJSON log
(``log.ndjson``) plus a rebuildable index (``index.json``) mapping package
names to byte offsets in the log. The index can be deleted at any time; it is
rebuilt by scanning the log on the next open.

Passing ``path=None`` gives a purely in-memory store, which is what most tests
use.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Iterator

from ._io import atomic_write, dumps
from .semver import (
    Constraint,
    Interval,
    MalformedVersion,
    Version,
    parse_constraint,
    parse_version,
)
from .timeutil import format_timestamp, parse_timestamp, utcnow

log = logging.getLogger(__name__)

LOG_NAME = "log.ndjson"
INDEX_NAME = "index.json"
_ADVISORY_KEY = "\x00advisories"
_EXTRA_FIELDS = ("optionalDependencies", "peerDependencies", "dist")


class StoreUnavailable(RuntimeError):
    pass


class UnknownPackage(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown package {self.name!r}"


class Severity(str, enum.Enum):
    LOW = "Low"
    MODERATE = "Moderate"
    HIGH = "High"
    CRITICAL = "Critical"


@dataclass(frozen=True)
class VersionRecord:
    package: str
    version: Version
    published_at: datetime
    dependencies: dict[str, Constraint] = field(default_factory=dict)
    tarball: str | None = None
    deleted: bool = False
    # extra manifest fields passed through to the proxy (dist, peer/optional deps)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def raw_dependencies(self) -> dict[str, str]:
        return {k: c.raw for k, c in self.dependencies.items()}

    def to_json(self) -> dict:
        return {
            "kind": "version",
            "package": self.package,
            "version": str(self.version),
            "publishedAt": format_timestamp(self.published_at),
            "dependencies": self.raw_dependencies,
            "tarball": self.tarball,
            "deleted": self.deleted,
            "extra": self.extra,
        }

    @classmethod
    def from_json(cls, d: dict) -> "VersionRecord":
        return cls(
            package=d["package"],
            version=parse_version(d["version"]),
            published_at=parse_timestamp(d["publishedAt"]),
            dependencies={k: parse_constraint(v) for k, v in d.get("dependencies", {}).items()},
            tarball=d.get("tarball"),
            deleted=bool(d.get("deleted", False)),
            extra=d.get("extra") or {},
        )


@dataclass(frozen=True)
class TagEvent:
    tag: str
    version: Version
    at: datetime


@dataclass(frozen=True)
class PackageHistory:
    package: str
    records: tuple[VersionRecord, ...] = ()
    tag_events: tuple[TagEvent, ...] = ()
    created: datetime | None = None

    def __post_init__(self):
        recs = tuple(sorted(self.records, key=lambda r: (r.published_at, r.version)))
        object.__setattr__(self, "records", recs)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[VersionRecord]:
        return iter(self.records)

    @property
    def versions(self) -> list[Version]:
        return [r.version for r in self.records]

    def get(self, version: Version | str) -> VersionRecord | None:
        v = parse_version(version)
        for r in self.records:
            if r.version == v:
                return r
        return None

    def as_of(self, t: datetime) -> "PackageHistory":
        return PackageHistory(
            self.package,
            tuple(r for r in self.records if r.published_at <= t),
            tuple(e for e in self.tag_events if e.at <= t),
            self.created,
        )

    def latest_release(self) -> VersionRecord | None:
        """Highest non-prerelease version."""
        releases = [r for r in self.records if not r.version.prerelease]
        return max(releases, key=lambda r: r.version) if releases else None


@dataclass(frozen=True)
class Advisory:
    id: str
    package: str
    affected: tuple[Interval, ...]
    patched: tuple[Version, ...] = ()
    severity: Severity | None = None

    def affects(self, v: Version) -> bool:
        return any(iv.contains(v) for iv in self.affected)

    def to_json(self) -> dict:
        return {
            "kind": "advisory",
            "id": self.id,
            "package": self.package,
            "affected": [_interval_json(iv) for iv in self.affected],
            "patched": [str(v) for v in self.patched],
            "severity": self.severity.value if self.severity else None,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Advisory":
        return cls(
            id=d["id"],
            package=d["package"],
            affected=tuple(_interval_from_json(x) for x in d["affected"]),
            patched=tuple(parse_version(v) for v in d.get("patched", [])),
            severity=Severity(d["severity"]) if d.get("severity") else None,
        )


def _interval_json(iv: Interval) -> dict:
    return {
        "lo": str(iv.lo) if iv.lo is not None else None,
        "hi": str(iv.hi) if iv.hi is not None else None,
        "loInclusive": iv.lo_inclusive,
        "hiInclusive": iv.hi_inclusive,
    }


def _interval_from_json(d: dict) -> Interval:
    return Interval(
        parse_version(d["lo"]) if d.get("lo") else None,
        parse_version(d["hi"]) if d.get("hi") else None,
        d.get("loInclusive", True),
        d.get("hiInclusive", False),
    )


@dataclass
class Skip:
    package: str
    version: str | None
    reason: str


@dataclass
class IngestionReport:
    documents: int = 0
    inserted: int = 0
    updated: int = 0
    unchanged: int = 0
    tombstoned: int = 0
    tag_events: int = 0
    skipped: list[Skip] = field(default_factory=list)
    invalid: list[Skip] = field(default_factory=list)
    last_seq: Any = None

    @property
    def has_errors(self) -> bool:
        return bool(self.skipped or self.invalid)

    def counters(self) -> dict[str, int]:
        return {
            "documents": self.documents,
            "inserted": self.inserted,
            "updated": self.updated,
            "unchanged": self.unchanged,
            "tombstoned": self.tombstoned,
            "tagEvents": self.tag_events,
            "skippedVersions": len(self.skipped),
            "invalidDocuments": len(self.invalid),
        }


@dataclass
class AdvisoryReport:
    ingested: int = 0
    unchanged: int = 0
    skipped: list[Skip] = field(default_factory=list)

    @property
    def has_errors(self) -> bool:
        return bool(self.skipped)


@dataclass
class _PackageState:
    records: dict[Version, VersionRecord] = field(default_factory=dict)
    tags: list[TagEvent] = field(default_factory=list)
    created: datetime | None = None

    def copy(self) -> "_PackageState":
        return _PackageState(dict(self.records), list(self.tags), self.created)

    def apply(self, entry: dict) -> None:
        kind = entry["kind"]
        if kind == "version":
            rec = VersionRecord.from_json(entry)
            self.records[rec.version] = rec
        elif kind == "tag":
            self.tags.append(TagEvent(entry["tag"], parse_version(entry["version"]), parse_timestamp(entry["at"])))
        elif kind == "meta":
            if entry.get("created"):
                self.created = parse_timestamp(entry["created"])

    def current_tags(self) -> dict[str, Version]:
        out = {}
        for e in self.tags:
            out[e.tag] = e.version
        return out


class Store:
    """Package metadata store; thread-safe for one writer and many readers."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.RLock()
        self._states: dict[str, _PackageState] = {}
        self._offsets: dict[str, list[int]] = {}
        self._advisories: dict[tuple[str, str], Advisory] | None = None
        self._newest: datetime | None = None
        self._log = None
        self._log_size = 0
        self._dirty = False
        if self.path is not None:
            self._open()
        else:
            self._advisories = {}

    # -- persistence -----------------------------------------------------

    @property
    def log_path(self) -> Path:
        return self.path / LOG_NAME

    @property
    def index_path(self) -> Path:
        return self.path / INDEX_NAME

    def _open(self) -> None:
        try:
            self.path.mkdir(parents=True, exist_ok=True)
            if not self.log_path.exists():
                self.log_path.touch()
            self._repair_tail()
            size = self.log_path.stat().st_size
            start = self._read_index(size)
            if start < size:
                self._scan(start)
            self._log_size = size
            self._log = open(self.log_path, "ab")
        except OSError as exc:
            raise StoreUnavailable(f"cannot open store at {self.path}: {exc}") from exc

    def _repair_tail(self) -> None:
        # drop a torn final line left by a crash mid-append
        with open(self.log_path, "rb+") as fh:
            fh.seek(0, os.SEEK_END)
            size = fh.tell()
            if size == 0:
                return
            fh.seek(size - 1)
            if fh.read(1) == b"\n":
                return
            pos = size - 1
            while pos > 0:
                step = min(4096, pos)
                fh.seek(pos - step)
                chunk = fh.read(step)
                nl = chunk.rfind(b"\n")
                if nl >= 0:
                    pos = pos - step + nl + 1
                    break
                pos -= step
            log.warning("truncating torn log tail at byte %d", pos)
            fh.truncate(pos)

    def _read_index(self, size: int) -> int:
        try:
            with open(self.index_path, encoding="utf-8") as fh:
                idx = json.load(fh)
            covered = int(idx["logSize"])
            if covered > size:
                raise ValueError("index is ahead of log")
            self._offsets = {k: list(v) for k, v in idx["packages"].items()}
            self._newest = parse_timestamp(idx["newest"]) if idx.get("newest") else None
            return covered
        except (OSError, ValueError, KeyError, TypeError):
            self._offsets = {}
            self._newest = None
            return 0

    def _scan(self, start: int) -> None:
        with open(self.log_path, "rb") as fh:
            fh.seek(start)
            pos = start
            for line in fh:
                entry = json.loads(line)
                key = _ADVISORY_KEY if entry["kind"] == "advisory" else entry["package"]
                self._offsets.setdefault(key, []).append(pos)
                if entry["kind"] == "version" and not entry.get("deleted"):
                    self._bump_newest(parse_timestamp(entry["publishedAt"]))
                pos += len(line)
        self._dirty = True

    def _bump_newest(self, t: datetime) -> None:
        if self._newest is None or t > self._newest:
            self._newest = t

    def _read_entries(self, key: str) -> list[dict]:
        offsets = self._offsets.get(key, [])
        out = []
        with open(self.log_path, "rb") as fh:
            for off in offsets:
                fh.seek(off)
                out.append(json.loads(fh.readline()))
        return out

    def _append(self, key: str, entry: dict) -> None:
        if self._log is None:
            return
        data = (dumps(entry) + "\n").encode("utf-8")
        self._offsets.setdefault(key, []).append(self._log_size)
        self._log.write(data)
        self._log_size += len(data)
        self._dirty = True

    def flush(self) -> None:
        with self._lock:
            if self._log is None or not self._dirty:
                return
            self._log.flush()
            os.fsync(self._log.fileno())
            index = {
                "logSize": self._log_size,
                "newest": format_timestamp(self._newest) if self._newest else None,
                "packages": self._offsets,
            }
            atomic_write(self.index_path, dumps(index))
            self._dirty = False

    def close(self) -> None:
        with self._lock:
            self.flush()
            if self._log is not None:
                self._log.close()
                self._log = None

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def healthy(self) -> bool:
        if self.path is None:
            return True
        return self.log_path.is_file() and os.access(self.log_path, os.R_OK)

    # -- reads -------------------------------------------------------------

    def _state(self, name: str) -> _PackageState | None:
        with self._lock:
            st = self._states.get(name)
            if st is None and self.path is not None and name in self._offsets:
                st = _PackageState()
                for entry in self._read_entries(name):
                    st.apply(entry)
                self._states[name] = st
            return st

    def package_names(self) -> list[str]:
        with self._lock:
            names = set(self._states) | {k for k in self._offsets if k != _ADVISORY_KEY}
        return sorted(names)

    def __contains__(self, name: str) -> bool:
        return self._state(name) is not None

    def __len__(self) -> int:
        return len(self.package_names())

    def newest_timestamp(self) -> datetime | None:
        return self._newest

    def history(self, name: str, include_deleted: bool = False) -> PackageHistory:
        st = self._state(name)
        if st is None:
            raise UnknownPackage(name)
        recs = tuple(r for r in st.records.values() if include_deleted or not r.deleted)
        return PackageHistory(name, recs, tuple(st.tags), st.created)

    def history_as_of(self, name: str, t: datetime | str | int) -> PackageHistory:
        """Records published at or before ``t`` that are not tombstoned."""
        return self.history(name).as_of(parse_timestamp(t))

    def histories(self) -> Iterator[PackageHistory]:
        for name in self.package_names():
            yield self.history(name)

    def _advisory_map(self) -> dict[tuple[str, str], Advisory]:
        with self._lock:
            if self._advisories is None:
                self._advisories = {}
                for entry in self._read_entries(_ADVISORY_KEY):
                    adv = Advisory.from_json(entry)
                    self._advisories[(adv.id, adv.package)] = adv
            return self._advisories

    def advisories(self, package: str | None = None) -> list[Advisory]:
        advs = self._advisory_map().values()
        if package is not None:
            advs = [a for a in advs if a.package == package]
        return sorted(advs, key=lambda a: (a.package, a.id))

    # -- writes ------------------------------------------------------------

    def ingest_changes(self, feed: Iterable[dict], now: datetime | None = None) -> IngestionReport:
        """Validate and upsert packument-shaped documents or ``_changes`` rows.

        Bad documents and versions are recorded in the report and skipped;
        replaying a document is a no-op.
        """
        now = now or utcnow()
        report = IngestionReport()
        for i, item in enumerate(feed):
            report.documents += 1
            try:
                self._ingest_one(item, i, now, report)
            except OSError as exc:
                raise StoreUnavailable(str(exc)) from exc
            if report.documents % 1000 == 0:
                self.flush()
        try:
            self.flush()
        except OSError as exc:
            raise StoreUnavailable(str(exc)) from exc
        return report

    def _ingest_one(self, item: Any, index: int, now: datetime, report: IngestionReport) -> None:
        if not isinstance(item, dict):
            report.invalid.append(Skip(f"#{index}", None, "document is not a JSON object"))
            return
        deleted = False
        doc = item
        if "doc" in item or ("seq" in item and "id" in item):
            report.last_seq = item.get("seq", report.last_seq)
            deleted = bool(item.get("deleted"))
            doc = item.get("doc")
            if doc is None:
                doc = {"name": item.get("id"), "_deleted": True}
        if not isinstance(doc, dict):
            report.invalid.append(Skip(f"#{index}", None, "doc is not a JSON object"))
            return
        name = doc.get("name") or doc.get("_id")
        if not isinstance(name, str) or not name.strip():
            report.invalid.append(Skip(f"#{index}", None, "missing package name"))
            return
        name = name.strip()
        if name.startswith("_design/"):
            return
        deleted = deleted or bool(doc.get("_deleted"))

        with self._lock:
            old = self._state(name)
            st = old.copy() if old is not None else _PackageState()
            pending: list[dict] = []

            if deleted or (isinstance(doc.get("time"), dict) and "unpublished" in doc["time"]):
                for v, rec in sorted(st.records.items()):
                    if not rec.deleted:
                        pending.append(_tombstone(rec))
                        report.tombstoned += 1
                self._commit(name, st, pending)
                return

            versions = doc.get("versions")
            times = doc.get("time")
            if not isinstance(versions, dict):
                report.invalid.append(Skip(name, None, "versions is not an object"))
                return
            if not isinstance(times, dict):
                report.invalid.append(Skip(name, None, "time is not an object"))
                return

            created = _safe_ts(times.get("created"))
            if created is not None and created != st.created:
                st.created = created
                pending.append({"kind": "meta", "package": name, "created": format_timestamp(created)})

            seen: set[Version] = set()
            for key in sorted(versions, key=str):
                rec = self._validate_version(name, key, versions[key], times, now, report)
                if rec is None:
                    continue
                if rec.version in seen:
                    report.skipped.append(Skip(name, key, "duplicate version after normalization"))
                    continue
                seen.add(rec.version)
                prev = st.records.get(rec.version)
                if prev == rec:
                    report.unchanged += 1
                    continue
                if prev is None:
                    report.inserted += 1
                else:
                    report.updated += 1
                pending.append(rec.to_json())

            for v, rec in sorted(st.records.items()):
                if v not in seen and not rec.deleted:
                    pending.append(_tombstone(rec))
                    report.tombstoned += 1

            tags = doc.get("dist-tags")
            if isinstance(tags, dict):
                at = _safe_ts(times.get("modified")) or now
                current = st.current_tags()
                for tag in sorted(tags):
                    try:
                        tv = parse_version(tags[tag])
                    except MalformedVersion:
                        report.skipped.append(Skip(name, str(tags[tag]), f"bad dist-tag {tag!r}"))
                        continue
                    if current.get(tag) != tv:
                        pending.append(
                            {"kind": "tag", "package": name, "tag": tag, "version": str(tv), "at": format_timestamp(at)}
                        )
                        report.tag_events += 1
            self._commit(name, st, pending)

    def _commit(self, name: str, st: _PackageState, pending: list[dict]) -> None:
        if not pending:
            return
        for entry in pending:
            self._append(name, entry)
            if entry["kind"] != "meta":
                st.apply(entry)
            if entry["kind"] == "version" and not entry["deleted"]:
                self._bump_newest(parse_timestamp(entry["publishedAt"]))
        self._states[name] = st

    def _validate_version(self, name, key, vdoc, times, now, report) -> VersionRecord | None:
        try:
            version = parse_version(key)
        except MalformedVersion as exc:
            report.skipped.append(Skip(name, str(key), f"malformed version: {exc.reason}"))
            return None
        if not isinstance(vdoc, dict):
            report.skipped.append(Skip(name, key, "version document is not an object"))
            return None
        if key not in times:
            report.skipped.append(Skip(name, key, "no publish time"))
            return None
        published = _safe_ts(times[key])
        if published is None:
            report.skipped.append(Skip(name, key, "unparseable publish time"))
            return None
        if published.timestamp() <= 0:
            report.skipped.append(Skip(name, key, "publish time not positive"))
            return None
        if published > now:
            report.skipped.append(Skip(name, key, "publish time in the future"))
            return None
        deps = vdoc.get("dependencies") or {}
        if not isinstance(deps, dict):
            deps = {}
        deps = {k: parse_constraint(v) for k, v in sorted(deps.items()) if isinstance(k, str) and isinstance(v, str)}
        dist = vdoc.get("dist") if isinstance(vdoc.get("dist"), dict) else {}
        tarball = dist.get("tarball") if isinstance(dist.get("tarball"), str) else None
        extra = {f: vdoc[f] for f in _EXTRA_FIELDS if isinstance(vdoc.get(f), dict) and vdoc[f]}
        return VersionRecord(name, version, published, deps, tarball, False, extra)

    def ingest_advisories(self, documents: Iterable[dict]) -> AdvisoryReport:
        """Import OSV-format advisories; one Advisory per (document, npm package)."""
        report = AdvisoryReport()
        with self._lock:
            existing = self._advisory_map()
            for i, doc in enumerate(documents):
                for adv in parse_osv(doc, report, ref=f"#{i}"):
                    key = (adv.id, adv.package)
                    if existing.get(key) == adv:
                        report.unchanged += 1
                        continue
                    existing[key] = adv
                    self._append(_ADVISORY_KEY, adv.to_json())
                    report.ingested += 1
        self.flush()
        return report


def _tombstone(rec: VersionRecord) -> dict:
    d = rec.to_json()
    d["deleted"] = True
    return d


def _safe_ts(value) -> datetime | None:
    if value is None:
        return None
    try:
        return parse_timestamp(value)
    except ValueError:
        return None


_SEVERITIES = {s.name: s for s in Severity}


def parse_osv(doc: Any, report: AdvisoryReport | None = None, ref: str = "?") -> list[Advisory]:
    """Convert one OSV document into advisories for its npm packages."""
    report = report if report is not None else AdvisoryReport()
    if not isinstance(doc, dict) or not isinstance(doc.get("id"), str):
        report.skipped.append(Skip(ref, None, "not an OSV document"))
        return []
    adv_id = doc["id"]
    sev_text = str((doc.get("database_specific") or {}).get("severity", "")).upper()
    severity = _SEVERITIES.get(sev_text)
    merged: dict[str, tuple[list[Interval], list[Version]]] = {}
    for affected in doc.get("affected") or []:
        pkg = (affected or {}).get("package") or {}
        name = pkg.get("name")
        if str(pkg.get("ecosystem", "")).lower() != "npm":
            report.skipped.append(Skip(str(name), None, f"{adv_id}: ecosystem {pkg.get('ecosystem')!r} is not npm"))
            continue
        if not isinstance(name, str) or not name:
            report.skipped.append(Skip(ref, None, f"{adv_id}: affected entry without package name"))
            continue
        intervals, patched = merged.setdefault(name, ([], []))
        for rng in affected.get("ranges") or []:
            if rng.get("type") not in ("SEMVER", "ECOSYSTEM"):
                report.skipped.append(Skip(name, None, f"{adv_id}: unsupported range type {rng.get('type')!r}"))
                continue
            try:
                ivs, fixed = _osv_events(rng.get("events") or [])
            except MalformedVersion as exc:
                report.skipped.append(Skip(name, exc.text, f"{adv_id}: malformed range version"))
                continue
            intervals.extend(ivs)
            patched.extend(fixed)
        for v in affected.get("versions") or []:
            try:
                pv = parse_version(v)
            except MalformedVersion:
                report.skipped.append(Skip(name, str(v), f"{adv_id}: malformed affected version"))
                continue
            intervals.append(Interval(pv, pv, True, True))

    out = []
    for name, (intervals, patched) in sorted(merged.items()):
        clean = []
        for v in sorted(set(patched)):
            if any(iv.contains(v) for iv in intervals):
                report.skipped.append(Skip(name, str(v), f"{adv_id}: patched version inside affected range"))
            else:
                clean.append(v)
        if not intervals:
            report.skipped.append(Skip(name, None, f"{adv_id}: no usable affected ranges"))
            continue
        out.append(Advisory(adv_id, name, tuple(intervals), tuple(clean), severity))
    return out


def _osv_events(events: list[dict]) -> tuple[list[Interval], list[Version]]:
    intervals, fixed = [], []
    lo: Version | None = None
    open_ = False
    for ev in events:
        if "introduced" in ev:
            lo = None if ev["introduced"] in ("0", 0) else parse_version(str(ev["introduced"]))
            open_ = True
        elif "fixed" in ev and open_:
            hi = parse_version(str(ev["fixed"]))
            intervals.append(Interval(lo, hi, True, False))
            fixed.append(hi)
            open_ = False
        elif "last_affected" in ev and open_:
            intervals.append(Interval(lo, parse_version(str(ev["last_affected"])), True, True))
            open_ = False
    if open_:
        intervals.append(Interval(lo, None, True, False))
    return intervals, fixed


def iter_feed(path: str | os.PathLike) -> Iterator[dict]:
    """Yield documents from a ``_changes`` response, JSON array, or NDJSON dump."""
    with open(path, encoding="utf-8") as fh:
        head = fh.read(1)
        while head and head.isspace():
            head = fh.read(1)
        fh.seek(0)
        if head == "[":
            yield from json.load(fh)
            return
        if head == "{":
            text = fh.read()
            try:
                whole = json.loads(text)
            except json.JSONDecodeError:
                whole = None
            if isinstance(whole, dict):
                if isinstance(whole.get("results"), list):
                    yield from whole["results"]
                else:
                    yield whole
                return
            for line in text.splitlines():
                if line.strip():
                    yield json.loads(line)
            return
        for line in fh:
            if line.strip():
                yield json.loads(line)


def iter_osv(paths: Iterable[str | os.PathLike]) -> Iterator[dict]:
    """Yield OSV documents from files or directories of ``*.json``."""
    for p in paths:
        p = Path(p)
        files = sorted(p.rglob("*.json")) if p.is_dir() else [p]
        for f in files:
            with open(f, encoding="utf-8") as fh:
                data = json.load(fh)
            if isinstance(data, list):
                yield from data
            else:
                yield data
