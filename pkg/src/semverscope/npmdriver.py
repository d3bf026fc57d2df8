"""Drive a real npm client through the time-travel proxy.

npm resolves against ``<proxy>/t/<asOf>/`` so it only sees what existed at
``asOf``. The resulting ``package-lock.json`` (lockfile v2/v3) is converted to
a :class:`ResolvedGraph` tagged ``resolver_kind = "npm"``.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shutil
import subprocess
import tempfile
from datetime import datetime
from pathlib import Path
from typing import Mapping

from .proxy import LocalBackend, ProxyServer
from .resolver import ROOT_NAME, Edge, Node, ResolutionFailed, ResolvedGraph
from .semver import parse_constraint, parse_version
from .store import Store
from .timeutil import format_timestamp, parse_timestamp

log = logging.getLogger(__name__)

NPM_KIND = "npm"
_ADD_LINE = re.compile(r"^add\s+(\S+)\s+(\S+)\s*$")


class NpmFailed(ResolutionFailed):
    def __init__(self, cmd: list[str], code: int, stderr: str):
        self.cmd, self.code, self.stderr = cmd, code, stderr
        super().__init__(f"{' '.join(cmd[:3])} exited {code}: {stderr.strip()[-400:]}")


def npm_available(npm: str = "npm") -> bool:
    return shutil.which(npm) is not None


def _npm(args: list[str], cwd: Path, npm: str, timeout: float) -> subprocess.CompletedProcess:
    cmd = [npm, *args, "--no-audit", "--no-fund", "--ignore-scripts", "--cache", str(cwd / ".npm-cache"), "--prefer-online"]
    env = dict(os.environ, npm_config_update_notifier="false", npm_config_loglevel="error")
    proc = subprocess.run(cmd, cwd=cwd, capture_output=True, text=True, timeout=timeout, env=env)
    if proc.returncode != 0:
        raise NpmFailed(cmd, proc.returncode, proc.stderr)
    return proc


def _write_manifest(workdir: Path, deps: Mapping[str, str], name: str) -> None:
    manifest = {"name": name, "version": "0.0.0", "private": True, "dependencies": dict(deps)}
    (workdir / "package.json").write_text(json.dumps(manifest, indent=2))


def npm_dry_run(registry_url: str, deps: Mapping[str, str], npm: str = "npm", timeout: float = 120.0) -> dict[str, set[str]]:
    """Packages npm would add for ``deps``, as {name: {versions}}.

    Parses the ``add NAME VERSION`` lines of ``npm install --dry-run``.
    """
    with tempfile.TemporaryDirectory(prefix="semverscope-npm-") as tmp:
        work = Path(tmp)
        _write_manifest(work, deps, "semverscope-probe")
        proc = _npm(["install", "--dry-run", "--registry", registry_url], work, npm, timeout)
    added: dict[str, set[str]] = {}
    for line in proc.stdout.splitlines():
        m = _ADD_LINE.match(line.strip())
        if m:
            added.setdefault(m.group(1), set()).add(m.group(2))
    return added


def _lock_name(path: str) -> str:
    return path.rsplit("node_modules/", 1)[-1]


def _lookup(packages: Mapping[str, dict], parent_path: str, name: str) -> str | None:
    # node resolution: nearest node_modules walking up from the parent
    base = parent_path
    while True:
        cand = f"{base}/node_modules/{name}" if base else f"node_modules/{name}"
        if cand in packages:
            return cand
        if not base:
            return None
        idx = base.rfind("/node_modules/")
        base = base[:idx] if idx >= 0 else ""


def graph_from_lockfile(lock: Mapping, as_of: datetime, store: Store | None = None, root_name: str = ROOT_NAME) -> ResolvedGraph:
    """Convert a lockfile v2/v3 ``packages`` map into a resolved graph.

    Publish times are looked up in ``store`` when given.
    """
    packages = lock.get("packages")
    if not isinstance(packages, Mapping):
        raise ValueError("lockfile has no 'packages' map (lockfileVersion >= 2 required)")
    root = Node(root_name)
    nodes: dict[str, Node] = {"": root}

    def node_at(path: str) -> Node:
        if path not in nodes:
            entry = packages[path]
            name = entry.get("name") or _lock_name(path)
            v = parse_version(entry["version"])
            published = None
            if store is not None and name in store:
                rec = store.history(name).get(v)
                published = rec.published_at if rec else None
            nodes[path] = Node(name, v, published)
        return nodes[path]

    edges = set()
    for path in sorted(packages):
        entry = packages[path]
        if path and entry.get("link"):
            continue
        parent = node_at(path)
        for field in ("dependencies", "optionalDependencies", "peerDependencies"):
            for dep, raw in (entry.get(field) or {}).items():
                target = _lookup(packages, path, dep)
                if target is None:
                    if field == "dependencies":
                        log.warning("lockfile: %s -> %s not installed", path or root_name, dep)
                    continue
                edges.add(Edge(parent, dep, parse_constraint(raw), node_at(target)))
    return ResolvedGraph(as_of, root, frozenset(nodes.values()), frozenset(edges), NPM_KIND)


class NpmDriver:
    """Resolve packages with npm at a point in time.

    Starts an in-process proxy over ``store`` unless ``proxy_base_url`` points
    at a running one. Use as a context manager, or call :meth:`close`.
    """

    def __init__(self, store: Store, proxy_base_url: str | None = None, npm: str = "npm", timeout: float = 180.0):
        self.store = store
        self.npm = npm
        self.timeout = timeout
        self._server = None
        if proxy_base_url is None:
            self._server = ProxyServer(("127.0.0.1", 0), LocalBackend(store))
            self._server.start_background()
            proxy_base_url = self._server.base_url
        self.base_url = proxy_base_url.rstrip("/")

    def registry_url(self, as_of: datetime | str | int) -> str:
        return f"{self.base_url}/t/{format_timestamp(parse_timestamp(as_of))}/"

    def lockfile(self, deps: Mapping[str, str], as_of: datetime) -> dict:
        with tempfile.TemporaryDirectory(prefix="semverscope-npm-") as tmp:
            work = Path(tmp)
            _write_manifest(work, deps, "semverscope-root")
            _npm(["install", "--package-lock-only", "--registry", self.registry_url(as_of)], work, self.npm, self.timeout)
            return json.loads((work / "package-lock.json").read_text())

    def resolve_deps(self, deps: Mapping[str, str], as_of: datetime, root_name: str = ROOT_NAME) -> ResolvedGraph:
        return graph_from_lockfile(self.lockfile(deps, as_of), as_of, self.store, root_name)

    def __call__(self, name: str, version, as_of: datetime) -> ResolvedGraph:
        # analysis.Driver signature: dependencies of name@version, root named after it
        rec = self.store.history(name).get(version)
        if rec is None:
            raise ResolutionFailed(f"{name}@{version} not in store")
        return self.resolve_deps(rec.raw_dependencies, as_of, root_name=name)

    def close(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "NpmDriver":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
