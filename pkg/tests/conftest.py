import os
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import HealthCheck, settings

from semverscope.store import Store
from semverscope.timeutil import format_timestamp

settings.register_profile(
    "default",
    max_examples=200,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

T0 = datetime(2020, 1, 1, tzinfo=timezone.utc)


def day(n: float) -> datetime:
    return T0 + timedelta(days=n)


def ts(n: float) -> str:
    return format_timestamp(day(n))


def packument(name, versions, tags=None, created=None, modified=None):
    """versions: {version: (day offset or timestamp string, deps dict)}"""
    vdocs, times = {}, {}
    for v, (when, deps) in versions.items():
        vdocs[v] = {
            "name": name,
            "version": v,
            "dependencies": dict(deps),
            "dist": {"tarball": f"https://registry.invalid/{name}/-/{name}-{v}.tgz"},
        }
        times[v] = when if isinstance(when, str) else ts(when)
    stamps = sorted(times.values())
    doc = {
        "name": name,
        "versions": vdocs,
        "time": {"created": created or (stamps[0] if stamps else ts(0)), "modified": modified or (stamps[-1] if stamps else ts(0)), **times},
        "dist-tags": tags if tags is not None else ({"latest": _max_release(versions)} if versions else {}),
    }
    return doc


def _max_release(versions):
    from semverscope.semver import parse_version

    rel = [parse_version(v) for v in versions if "-" not in v]
    return str(max(rel)) if rel else next(iter(versions))


def make_store(*docs, path=None) -> Store:
    s = Store(path)
    report = s.ingest_changes(docs)
    assert not report.invalid, report.invalid
    return s


@pytest.fixture
def store_factory():
    stores = []

    def build(*docs, path=None):
        s = make_store(*docs, path=path)
        stores.append(s)
        return s

    yield build
    for s in stores:
        s.close()


# -- acceptance reporting ------------------------------------------------------

_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n, title = marker.args
    if rep.when == "setup" and rep.skipped:
        _RESULTS[n] = ("SKIP", title)
    elif rep.when == "call":
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        prev = _RESULTS.get(n)
        # a criterion with several tests fails if any of them fails
        if prev is None or prev[0] == "PASS" or status == "FAIL":
            _RESULTS[n] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, title = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}")
