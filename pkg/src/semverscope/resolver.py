"""Flat, time-filtered dependency resolver.

This is a deliberate approximation of npm: every dependency edge independently
picks the highest release satisfying its constraint among versions published
at or before ``as_of``. There is no cross-edge unification and no hoisting, so
a package may appear at several versions. Graphs produced here are tagged
``resolver_kind = "flat-approx"``; studies that need npm's exact tree should
drive a real npm client through :mod:`semverscope.proxy` instead.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping

from .semver import Constraint, Version, parse_constraint, satisfies
from .store import PackageHistory, Store, UnknownPackage
from .timeutil import format_timestamp

ROOT_NAME = "<root>"
_ZERO = Version(0, 0, 0)
RESOLVER_KIND = "flat-approx"


class ResolutionFailed(LookupError):
    """Any resolver (flat or external) could not produce a graph."""


class UnsatisfiableDependency(ResolutionFailed):
    def __init__(self, name: str, constraint: Constraint, as_of: datetime, available: list[Version], reason: str):
        self.name = name
        self.constraint = constraint
        self.as_of = as_of
        self.available = available
        self.reason = reason
        avail = ", ".join(str(v) for v in available) or "none"
        super().__init__(
            f"{name}@{constraint.raw!r} unsatisfiable as of {format_timestamp(as_of)} ({reason}); available: {avail}"
        )


@dataclass(frozen=True)
class Node:
    name: str
    version: Version | None = None  # None only for the root
    published_at: datetime | None = field(default=None, compare=False)

    @property
    def is_root(self) -> bool:
        return self.version is None

    def sort_key(self) -> tuple:
        return (not self.is_root, self.name, self.version or _ZERO)

    def label(self) -> str:
        return self.name if self.version is None else f"{self.name}@{self.version}"


@dataclass(frozen=True)
class Edge:
    parent: Node
    name: str
    constraint: Constraint
    child: Node


@dataclass(frozen=True)
class ResolvedGraph:
    as_of: datetime
    root: Node
    nodes: frozenset[Node]
    edges: frozenset[Edge]
    resolver_kind: str = RESOLVER_KIND

    def dependency_nodes(self) -> list[Node]:
        return sorted((n for n in self.nodes if not n.is_root), key=Node.sort_key)

    def versions_of(self, name: str) -> list[Version]:
        return sorted(n.version for n in self.nodes if n.name == name)

    def children(self, node: Node) -> list[Edge]:
        return sorted((e for e in self.edges if e.parent == node), key=lambda e: e.name)

    def paths_to(self, name: str) -> set[str]:
        """Names of every package lying on some root path to ``name`` (root excluded)."""
        parents: dict[Node, set[Node]] = {}
        for e in self.edges:
            parents.setdefault(e.child, set()).add(e.parent)
        seen: set[Node] = set()
        stack = [n for n in self.nodes if n.name == name]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(parents.get(n, ()))
        return {n.name for n in seen if not n.is_root and n.name != name}

    def to_records(self) -> list[dict]:
        """NDJSON records: one meta line, then nodes, then edges, all sorted."""
        out = [
            {
                "type": "meta",
                "asOf": format_timestamp(self.as_of),
                "resolverKind": self.resolver_kind,
                "root": self.root.name,
                "nodes": len(self.nodes),
                "edges": len(self.edges),
            }
        ]
        for n in self.dependency_nodes():
            out.append(
                {"type": "node", "name": n.name, "version": str(n.version), "publishedAt": format_timestamp(n.published_at)}
            )
        for e in sorted(self.edges, key=lambda e: (e.parent.sort_key(), e.name, e.child.sort_key())):
            out.append(
                {
                    "type": "edge",
                    "from": e.parent.label(),
                    "name": e.name,
                    "constraint": e.constraint.raw,
                    "to": e.child.label(),
                }
            )
        return out

    def lockfile(self) -> dict:
        """A package-lock-like summary keyed by ``name@version``."""
        packages: dict[str, dict] = {}
        for n in [self.root, *self.dependency_nodes()]:
            entry: dict = {}
            if not n.is_root:
                entry = {"name": n.name, "version": str(n.version), "publishedAt": format_timestamp(n.published_at)}
            deps = {e.name: str(e.child.version) for e in self.children(n)}
            if deps:
                entry["dependencies"] = deps
            packages["" if n.is_root else n.label()] = entry
        return {
            "asOf": format_timestamp(self.as_of),
            "resolverKind": self.resolver_kind,
            "packages": packages,
        }


class _Source:
    """Memoizes time-filtered histories for one resolution run."""

    def __init__(self, store: Store, as_of: datetime):
        self.store = store
        self.as_of = as_of
        self._cache: dict[str, PackageHistory] = {}

    def history(self, name: str) -> PackageHistory:
        h = self._cache.get(name)
        if h is None:
            h = self._cache[name] = self.store.history_as_of(name, self.as_of)
        return h


def select_version(history: PackageHistory, constraint: Constraint, as_of: datetime):
    """Highest release in ``history`` satisfying ``constraint``."""
    if not constraint.has_intervals:
        raise UnsatisfiableDependency(history.package, constraint, as_of, [], "non-interval-constraint")
    best = None
    for rec in history.records:
        if rec.version.prerelease or not satisfies(rec.version, constraint):
            continue
        if best is None or rec.version > best.version:
            best = rec
    if best is None:
        available = sorted(r.version for r in history.records)
        raise UnsatisfiableDependency(history.package, constraint, as_of, available, "no-satisfying-version")
    return best


def resolve(
    root_deps: Mapping[str, str | Constraint],
    as_of: datetime,
    store: Store,
    root_name: str = ROOT_NAME,
) -> ResolvedGraph:
    """Breadth-first flat resolution of ``root_deps`` as of ``as_of``.

    Raises UnknownPackage or UnsatisfiableDependency.
    """
    source = _Source(store, as_of)
    root = Node(root_name)
    nodes: dict[tuple[str, Version | None], Node] = {(root.name, None): root}
    edges: set[Edge] = set()
    picks: dict[tuple[str, str], Node] = {}
    queue: deque[tuple[Node, dict[str, Constraint]]] = deque()
    queue.append((root, {k: parse_constraint(v) for k, v in root_deps.items()}))
    while queue:
        parent, deps = queue.popleft()
        for name in sorted(deps):
            c = deps[name]
            child = picks.get((name, c.raw))
            if child is None:
                rec = select_version(source.history(name), c, as_of)
                key = (name, rec.version)
                child = nodes.get(key)
                if child is None:
                    child = nodes[key] = Node(name, rec.version, rec.published_at)
                    queue.append((child, rec.dependencies))
                picks[(name, c.raw)] = child
            edges.add(Edge(parent, name, c, child))
    return ResolvedGraph(as_of, root, frozenset(nodes.values()), frozenset(edges))


def resolve_manifest(manifest: Mapping, as_of: datetime, store: Store, include_dev: bool = False) -> ResolvedGraph:
    """Resolve a package.json-shaped root manifest."""
    deps = dict(manifest.get("dependencies") or {})
    if include_dev:
        for k, v in (manifest.get("devDependencies") or {}).items():
            deps.setdefault(k, v)
    return resolve(deps, as_of, store, root_name=manifest.get("name") or ROOT_NAME)


def resolve_package(name: str, as_of: datetime, store: Store, version: Version | None = None) -> ResolvedGraph:
    """Resolve the dependencies of a published package (its latest release by default)."""
    history = store.history_as_of(name, as_of)
    rec = history.get(version) if version is not None else history.latest_release()
    if rec is None:
        raise UnknownPackage(name if version is None else f"{name}@{version}")
    return resolve(rec.dependencies, as_of, store, root_name=rec.package)


__all__ = [
    "Node",
    "Edge",
    "ResolvedGraph",
    "UnsatisfiableDependency",
    "ResolutionFailed",
    "UnknownPackage",
    "resolve",
    "resolve_manifest",
    "resolve_package",
    "select_version",
    "RESOLVER_KIND",
]
