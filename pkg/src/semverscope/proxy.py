"""Time-traveling registry proxy.

``GET /t/{asOf}/{package}`` returns the package's packument as it would have
looked at ``asOf``: only versions published at or before that instant, with the
``time`` map and ``dist-tags`` rewritten to match. Pointing an unmodified npm
client at ``http://host:port/t/{asOf}/`` makes it resolve dependencies
against the registry of that moment.

Two backends are available: a local :class:`~semverscope.store.Store`
(hermetic) and an upstream registry with an on-disk cache.
"""

from __future__ import annotations

import gzip
import json
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from datetime import datetime
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any

from ._io import atomic_write, dumps
from .semver import MalformedVersion, Version, parse_version
from .store import PackageHistory, Store, TagEvent, UnknownPackage
from .timeutil import format_timestamp, parse_timestamp

log = logging.getLogger(__name__)


class UpstreamError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeScopedRequest:
    as_of: datetime
    package: str

    @classmethod
    def from_path(cls, path: str) -> "TimeScopedRequest":
        """Parse ``/t/{asOf}/{package}``. Raises ValueError on a bad timestamp or name."""
        parts = urllib.parse.urlsplit(path).path.split("/")
        if len(parts) < 4 or parts[1] != "t":
            raise LookupError(path)
        as_of = parse_timestamp(urllib.parse.unquote(parts[2]))
        name = urllib.parse.unquote("/".join(parts[3:]))
        if not name or name.startswith("-/"):
            raise LookupError(path)
        return cls(as_of, name)


def _version_or_none(text: Any) -> Version | None:
    try:
        return parse_version(text)
    except MalformedVersion:
        return None


def filter_packument(
    packument: dict,
    as_of: datetime,
    tag_events: tuple[TagEvent, ...] | None = None,
) -> dict | None:
    """Return the packument restricted to versions published by ``as_of``.

    Returns None when no version survives. ``dist-tags.latest`` becomes the
    highest retained release; other tags survive only through recorded tag
    events at or before ``as_of`` that point at a retained version.
    """
    times = packument.get("time") or {}
    versions = packument.get("versions") or {}
    kept: dict[str, Version] = {}
    kept_times: dict[str, datetime] = {}
    for key in versions:
        stamp = times.get(key)
        v = _version_or_none(key)
        if stamp is None or v is None:
            continue
        try:
            t = parse_timestamp(stamp)
        except ValueError:
            continue
        if t <= as_of:
            kept[key] = v
            kept_times[key] = t
    if not kept:
        return None

    order = sorted(kept, key=lambda k: kept[k])
    out: dict[str, Any] = {}
    for k, val in packument.items():
        if k in ("versions", "time", "dist-tags"):
            out[k] = None  # placeholder keeps upstream key order
        else:
            out[k] = val
    out.setdefault("name", packument.get("name"))

    new_time: dict[str, str] = {}
    if "created" in times:
        new_time["created"] = times["created"]
    new_time["modified"] = format_timestamp(max(kept_times.values()))
    for k in order:
        new_time[k] = times[k]

    tags: dict[str, str] = {}
    releases = [k for k in order if not kept[k].prerelease]
    if releases:
        tags["latest"] = releases[-1]
    by_version = {v: k for k, v in kept.items()}
    latest_event: dict[str, TagEvent] = {}
    for ev in tag_events or ():
        if ev.at <= as_of and ev.tag != "latest":
            latest_event[ev.tag] = ev
    for tag in sorted(latest_event):
        key = by_version.get(latest_event[tag].version)
        if key is not None:
            tags[tag] = key

    out["versions"] = {k: versions[k] for k in order}
    out["time"] = new_time
    out["dist-tags"] = tags
    return out


def packument_from_history(history: PackageHistory) -> dict:
    """Build a registry-shaped packument from stored records."""
    versions = {}
    times: dict[str, str] = {}
    if history.created is not None:
        times["created"] = format_timestamp(history.created)
    for rec in sorted(history.records, key=lambda r: r.version):
        key = str(rec.version)
        doc: dict[str, Any] = {"name": history.package, "version": key}
        if rec.dependencies:
            doc["dependencies"] = rec.raw_dependencies
        for f in ("optionalDependencies", "peerDependencies"):
            if f in rec.extra:
                doc[f] = rec.extra[f]
        dist = dict(rec.extra.get("dist", {}))
        if rec.tarball:
            dist["tarball"] = rec.tarball
        if dist:
            doc["dist"] = dist
        versions[key] = doc
        times[key] = format_timestamp(rec.published_at)
    return {"name": history.package, "dist-tags": {}, "versions": versions, "time": times}


class LocalBackend:
    mode = "local"

    def __init__(self, store: Store):
        self.store = store

    def packument(self, name: str) -> tuple[dict, tuple[TagEvent, ...]]:
        history = self.store.history(name)
        return packument_from_history(history), history.tag_events

    def status(self) -> dict:
        if not self.store.healthy():
            raise UpstreamError("store unreachable")
        newest = self.store.newest_timestamp()
        return {
            "mode": self.mode,
            "packages": len(self.store),
            "newestRecordAt": format_timestamp(newest) if newest else None,
        }


class _Flight:
    def __init__(self):
        self.done = threading.Event()
        self.doc: dict | None = None
        self.error: BaseException | None = None


class UpstreamBackend:
    """Fetch packuments from a real registry, caching them in memory and on disk.

    Concurrent misses for the same package share one upstream request.
    """

    mode = "upstream"

    def __init__(self, upstream: str, cache_dir: str | Path | None = None, timeout: float = 30.0):
        self.upstream = upstream.rstrip("/")
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.timeout = timeout
        self._cache: dict[str, dict] = {}
        self._inflight: dict[str, _Flight] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.upstream_requests = 0

    def _cache_file(self, name: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / (urllib.parse.quote(name, safe="") + ".json")

    def _fetch(self, name: str) -> dict:
        path = self._cache_file(name)
        if path is not None and path.exists():
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        url = f"{self.upstream}/{urllib.parse.quote(name, safe='@')}"
        req = urllib.request.Request(url, headers={"Accept": "application/json"})
        self.upstream_requests += 1
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = resp.read()
                if resp.headers.get("Content-Encoding") == "gzip":
                    body = gzip.decompress(body)
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise UnknownPackage(name) from exc
            raise UpstreamError(f"upstream returned {exc.code} for {name}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise UpstreamError(f"upstream unreachable: {exc}") from exc
        try:
            doc = json.loads(body)
        except ValueError as exc:
            raise UpstreamError(f"upstream sent invalid JSON for {name}") from exc
        if path is not None:
            atomic_write(path, dumps(doc))
        return doc

    def packument(self, name: str) -> tuple[dict, tuple[TagEvent, ...]]:
        with self._lock:
            if name in self._cache:
                self.hits += 1
                return self._cache[name], ()
            flight = self._inflight.get(name)
            leader = flight is None
            if leader:
                flight = self._inflight[name] = _Flight()
                self.misses += 1
        if not leader:
            flight.done.wait()
            if flight.error is not None:
                raise flight.error
            return flight.doc, ()
        try:
            flight.doc = self._fetch(name)
        except BaseException as exc:
            flight.error = exc
        with self._lock:
            if flight.error is None:
                self._cache[name] = flight.doc
            del self._inflight[name]
        flight.done.set()
        if flight.error is not None:
            raise flight.error
        return flight.doc, ()

    def status(self) -> dict:
        with self._lock:
            return {
                "mode": self.mode,
                "upstream": self.upstream,
                "cacheEntries": len(self._cache),
                "cacheHits": self.hits,
                "cacheMisses": self.misses,
            }


def _error(status: int, message: str) -> tuple[int, bytes]:
    return status, dumps({"error": message}).encode("utf-8")


def serve_packument(backend, path: str) -> tuple[int, bytes]:
    """Answer one GET for ``path``; returns (status, JSON body)."""
    try:
        req = TimeScopedRequest.from_path(path)
    except LookupError:
        return _error(404, "not found")
    except ValueError as exc:
        return _error(400, f"malformed timestamp: {exc}")
    try:
        doc, tag_events = backend.packument(req.package)
    except UnknownPackage:
        return _error(404, "Not found")
    except UpstreamError as exc:
        return _error(502, str(exc))
    filtered = filter_packument(doc, req.as_of, tag_events)
    if filtered is None:
        return _error(404, "Not found")
    return 200, dumps(filtered).encode("utf-8")


def serve_health(backend) -> tuple[int, bytes]:
    try:
        return 200, dumps(backend.status()).encode("utf-8")
    except Exception as exc:  # any backend failure is reported, not raised
        return _error(503, str(exc))


class ProxyHandler(BaseHTTPRequestHandler):
    server_version = "semverscope-proxy"
    protocol_version = "HTTP/1.1"

    def do_GET(self):
        backend = self.server.backend
        if self.path.split("?")[0] in ("/-/health", "/-/ping", "/"):
            status, body = serve_health(backend)
        else:
            status, body = serve_packument(backend, self.path)
        headers = {"Content-Type": "application/json"}
        if "gzip" in (self.headers.get("Accept-Encoding") or ""):
            body = gzip.compress(body, mtime=0)
            headers["Content-Encoding"] = "gzip"
        self.send_response(status)
        for k, v in headers.items():
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_HEAD(self):
        self.send_response(HTTPStatus.METHOD_NOT_ALLOWED)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _reject(self):
        status, body = _error(405, "read-only registry")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    do_PUT = do_POST = do_DELETE = _reject

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)


class ProxyServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], backend):
        super().__init__(address, ProxyHandler)
        self.backend = backend

    @property
    def base_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def registry_url(self, as_of: datetime | str | int) -> str:
        return f"{self.base_url}/t/{format_timestamp(parse_timestamp(as_of))}/"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t
