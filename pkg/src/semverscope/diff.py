"""Classify what an update changed by comparing two registry tarballs."""

from __future__ import annotations

import enum
import hashlib
import io
import json
import os
import tarfile
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Union

from .semver import IncrementType

CODE_EXTENSIONS = (".js", ".ts", ".jsx", ".tsx")
DEPENDENCY_FIELDS = ("dependencies", "devDependencies", "peerDependencies", "optionalDependencies")

Archive = Union[str, os.PathLike, bytes]


class CorruptArchive(ValueError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"corrupt archive {path}: {reason}")


class ChangeClass(str, enum.Enum):
    CODE_ONLY = "CodeOnly"
    DEPS_ONLY = "DepsOnly"
    BOTH = "Both"
    NEITHER = "Neither"


class ChangeKind(str, enum.Enum):
    ADDED = "added"
    REMOVED = "removed"
    MODIFIED = "modified"


@dataclass(frozen=True)
class FileChange:
    path: str
    kind: ChangeKind


@dataclass(frozen=True)
class DiffResult:
    change_class: ChangeClass
    changes: tuple[FileChange, ...]
    code_changed: bool
    deps_changed: bool

    def to_json(self) -> dict:
        return {
            "class": self.change_class.value,
            "codeChanged": self.code_changed,
            "depsChanged": self.deps_changed,
            "changes": [{"path": c.path, "kind": c.kind.value} for c in self.changes],
        }


@dataclass
class _Snapshot:
    hashes: dict[str, str]
    manifest: bytes | None


def _label(archive: Archive) -> str:
    return "<bytes>" if isinstance(archive, bytes) else os.fspath(archive)


def _strip_root(names: list[str]) -> dict[str, str]:
    # npm tarballs nest everything under one top directory, usually "package/"
    tops = {n.split("/", 1)[0] for n in names}
    if len(tops) == 1 and all("/" in n for n in names):
        return {n: n.split("/", 1)[1] for n in names}
    return {n: n for n in names}


def _snapshot(archive: Archive) -> _Snapshot:
    label = _label(archive)
    raw: dict[str, str] = {}
    manifests: dict[str, bytes] = {}
    try:
        if isinstance(archive, bytes):
            tf = tarfile.open(fileobj=io.BytesIO(archive), mode="r|*")
        else:
            tf = tarfile.open(archive, mode="r|*")
        with tf:
            for member in tf:
                if not member.isfile():
                    continue
                name = member.name
                while name.startswith("./"):
                    name = name[2:]
                fh = tf.extractfile(member)
                h = hashlib.sha256()
                data = b""
                is_manifest = name.rsplit("/", 1)[-1] == "package.json" and name.count("/") <= 1
                while True:
                    chunk = fh.read(1 << 16)
                    if not chunk:
                        break
                    h.update(chunk)
                    if is_manifest:
                        data += chunk
                raw[name] = h.hexdigest()
                if is_manifest:
                    manifests[name] = data
    except (tarfile.TarError, EOFError, zlib.error, OSError) as exc:
        raise CorruptArchive(label, str(exc) or type(exc).__name__) from exc
    mapping = _strip_root(list(raw))
    hashes = {mapping[n]: digest for n, digest in raw.items()}
    manifest = None
    for n, data in manifests.items():
        if mapping[n] == "package.json":
            manifest = data
    return _Snapshot(hashes, manifest)


def _dependency_fields(manifest: bytes | None):
    if manifest is None:
        return {f: {} for f in DEPENDENCY_FIELDS}
    try:
        doc = json.loads(manifest)
    except ValueError:
        return None  # unparseable manifest; only equal if the other one is too
    if not isinstance(doc, dict):
        return None
    return {f: (doc.get(f) or {}) for f in DEPENDENCY_FIELDS}


def _is_code(path: str) -> bool:
    return path.lower().endswith(CODE_EXTENSIONS)


def classify_update_contents(old: Archive, new: Archive) -> DiffResult:
    """Compare two tarballs by file content hash and manifest dependency fields."""
    a, b = _snapshot(old), _snapshot(new)
    changes = []
    for path in sorted(set(a.hashes) | set(b.hashes)):
        if path not in b.hashes:
            changes.append(FileChange(path, ChangeKind.REMOVED))
        elif path not in a.hashes:
            changes.append(FileChange(path, ChangeKind.ADDED))
        elif a.hashes[path] != b.hashes[path]:
            changes.append(FileChange(path, ChangeKind.MODIFIED))
    code = any(_is_code(c.path) for c in changes)
    da, db = _dependency_fields(a.manifest), _dependency_fields(b.manifest)
    if da is None or db is None:
        deps = (da is None) != (db is None) or a.manifest != b.manifest
    else:
        deps = da != db
    if code and deps:
        cls = ChangeClass.BOTH
    elif code:
        cls = ChangeClass.CODE_ONLY
    elif deps:
        cls = ChangeClass.DEPS_ONLY
    else:
        cls = ChangeClass.NEITHER
    return DiffResult(cls, tuple(changes), code, deps)


@dataclass(frozen=True)
class ContentRow:
    package: str
    increment: IncrementType
    total: int
    fractions: dict[ChangeClass, float]

    def to_json(self) -> dict:
        return {
            "package": self.package,
            "increment": self.increment.value,
            "updates": self.total,
            **{c.value: round(100.0 * self.fractions[c], 6) for c in ChangeClass},
        }


def content_distribution(
    classified: Iterable[tuple[str, IncrementType, ChangeClass]],
) -> list[ContentRow]:
    """Per (package, increment type) share of each change class; never pooled."""
    counts: dict[tuple[str, IncrementType], Counter] = defaultdict(Counter)
    for pkg, inc, cls in classified:
        counts[(pkg, IncrementType(inc))][ChangeClass(cls)] += 1
    order = {t: i for i, t in enumerate(IncrementType)}
    rows = []
    for pkg, inc in sorted(counts, key=lambda k: (k[0], order[k[1]])):
        c = counts[(pkg, inc)]
        total = sum(c.values())
        rows.append(ContentRow(pkg, inc, total, {cls: c[cls] / total for cls in ChangeClass}))
    return rows
