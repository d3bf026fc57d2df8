import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from semverscope.resolver import (
    RESOLVER_KIND,
    UnsatisfiableDependency,
    resolve,
    resolve_manifest,
    resolve_package,
)
from semverscope.semver import satisfies
from semverscope.store import Store, UnknownPackage

from .conftest import day, packument
from .oracles import OracleUnsatisfiable, oracle_resolve, oracle_satisfies

A = packument("a", {"1.0.0": (0, {}), "1.1.0": (1, {}), "2.0.0": (5, {})})


def labels(g):
    return [n.label() for n in g.dependency_nodes()]


def test_picks_highest_satisfying(store_factory):
    s = store_factory(A)
    g = resolve({"a": "^1.0.0"}, day(10), s)
    assert labels(g) == ["a@1.1.0"]
    assert g.resolver_kind == RESOLVER_KIND == "flat-approx"


def test_empty_root(store_factory):
    g = resolve({}, day(10), store_factory(A))
    assert g.nodes == {g.root} and not g.edges


def test_time_filter_makes_unsatisfiable(store_factory):
    s = store_factory(A)
    with pytest.raises(UnsatisfiableDependency) as exc:
        resolve({"a": "^2.0.0"}, day(3), s)
    assert exc.value.reason == "no-satisfying-version"
    assert [str(v) for v in exc.value.available] == ["1.0.0", "1.1.0"]


def test_non_interval_constraint(store_factory):
    s = store_factory(A)
    with pytest.raises(UnsatisfiableDependency) as exc:
        resolve({"a": "git+https://x.invalid/a.git"}, day(10), s)
    assert exc.value.reason == "non-interval-constraint"
    with pytest.raises(UnknownPackage):
        resolve({"zzz": "*"}, day(10), s)


def test_other_ranges_still_resolve(store_factory):
    s = store_factory(A)
    assert labels(resolve({"a": "1.0.0 - 1.1.0"}, day(10), s)) == ["a@1.1.0"]
    assert labels(resolve({"a": "^1.0.0 || ^2.0.0"}, day(10), s)) == ["a@2.0.0"]


def test_cycle_terminates(store_factory):
    s = store_factory(
        packument("a", {"1.0.0": (0, {"b": "^1.0.0"})}),
        packument("b", {"1.0.0": (0, {"a": "^1.0.0"})}),
    )
    g = resolve({"a": "*"}, day(1), s)
    assert labels(g) == ["a@1.0.0", "b@1.0.0"]
    assert len(g.edges) == 3


def test_prereleases_never_selected(store_factory):
    s = store_factory(packument("a", {"1.0.0": (0, {}), "1.1.0-rc.1": (1, {})}))
    assert labels(resolve({"a": ">=1.0.0"}, day(2), s)) == ["a@1.0.0"]


def test_manifest_dev_flag_and_package(store_factory):
    s = store_factory(A, packument("app", {"1.0.0": (2, {"a": "~1.0.0"})}))
    m = {"name": "root", "dependencies": {}, "devDependencies": {"a": "*"}}
    assert labels(resolve_manifest(m, day(9), s)) == []
    assert labels(resolve_manifest(m, day(9), s, include_dev=True)) == ["a@2.0.0"]
    g = resolve_package("app", day(9), s)
    assert g.root.name == "app" and labels(g) == ["a@1.0.0"]


def test_non_root_dev_and_peer_ignored(store_factory):
    doc = packument("lib", {"1.0.0": (0, {})})
    doc["versions"]["1.0.0"]["devDependencies"] = {"a": "*"}
    doc["versions"]["1.0.0"]["peerDependencies"] = {"a": "*"}
    s = store_factory(doc, A)
    assert labels(resolve({"lib": "*"}, day(9), s)) == ["lib@1.0.0"]


def test_serialization(store_factory):
    s = store_factory(A, packument("b", {"1.0.0": (0, {"a": "^1.0.0"})}))
    g = resolve({"b": "*", "a": ">=2.0.0"}, day(9), s)
    recs = g.to_records()
    assert recs[0] == {"type": "meta", "asOf": "2020-01-10T00:00:00.000Z", "resolverKind": "flat-approx",
                       "root": "<root>", "nodes": 4, "edges": 3}
    assert [r["name"] + "@" + r["version"] for r in recs if r["type"] == "node"] == ["a@1.1.0", "a@2.0.0", "b@1.0.0"]
    lock = g.lockfile()
    assert lock["packages"][""]["dependencies"] == {"a": "2.0.0", "b": "1.0.0"}
    assert lock["packages"]["b@1.0.0"]["dependencies"] == {"a": "1.1.0"}
    json.dumps(lock)


def test_graph_invariants_and_monotone(store_factory):
    s = store_factory(A, packument("b", {"1.0.0": (0, {"a": "^1.0.0"}), "1.1.0": (4, {"a": "~1.0.0"})}))
    prev = None
    for t in range(0, 12):
        g = resolve({"a": ">=1.0.0"}, day(t), s)
        for e in g.edges:
            assert satisfies(e.child.version, e.constraint)
        assert all(n.published_at <= day(t) for n in g.dependency_nodes())
        (v,) = g.versions_of("a")
        if prev is not None:
            assert v >= prev
        prev = v


# -- oracle --------------------------------------------------------------------

OPS = ["=", "", "~", "^", ">=", "*"]


def _constraint(rng, versions):
    op = rng.choice(OPS)
    if op == "*":
        return "*"
    base = rng.choice(versions).split("-")[0]
    if rng.random() < 0.05:  # sometimes a bound that matches nothing published
        base = f"{rng.randrange(3)}.{rng.randrange(3)}.{rng.randrange(3)}"
    return f"{op}{base}"


def random_registry(rng):
    names = [f"p{i}" for i in range(rng.randint(1, 6))]
    versions = {}
    for name in names:
        vs = set()
        for _ in range(rng.randint(1, 5)):
            v = f"{rng.randrange(3)}.{rng.randrange(3)}.{rng.randrange(3)}"
            vs.add(v + "-rc.1" if rng.random() < 0.1 else v)
        versions[name] = sorted(vs)
    reg = {}
    for name in names:
        reg[name] = {}
        for v in versions[name]:
            deps = {d: _constraint(rng, versions[d]) for d in rng.sample(names, rng.randint(0, min(2, len(names))))}
            reg[name][v] = (rng.randrange(0, 15), deps)
    root = {d: _constraint(rng, versions[d]) for d in rng.sample(names, rng.randint(1, min(3, len(names))))}
    return reg, root


def _oracle_sat(v, c):
    if c == "*":
        return oracle_satisfies(v, "*", "")
    for op in (">=", "=", "~", "^"):
        if c.startswith(op):
            return oracle_satisfies(v, op, c[len(op):])
    return oracle_satisfies(v, "", c)


def check_against_oracle(reg, root, as_of) -> bool:
    s = Store()
    s.ingest_changes([packument(n, vs, tags={}) for n, vs in reg.items()])
    timed = {n: {v: (day(t), deps) for v, (t, deps) in vs.items()} for n, vs in reg.items()}
    try:
        onodes, oedges = oracle_resolve(timed, root, day(as_of), _oracle_sat)
    except OracleUnsatisfiable:
        with pytest.raises(UnsatisfiableDependency):
            resolve(root, day(as_of), s)
        return True
    g = resolve(root, day(as_of), s)
    nodes = {(n.name, str(n.version)) for n in g.dependency_nodes()}
    edges = {
        (None if e.parent.is_root else (e.parent.name, str(e.parent.version)), e.name, e.constraint.raw,
         (e.child.name, str(e.child.version)))
        for e in g.edges
    }
    return nodes == onodes and edges == oedges


def test_oracle_small_sample():
    rng = random.Random(5)
    for _ in range(40):
        reg, root = random_registry(rng)
        assert check_against_oracle(reg, root, rng.randrange(8, 30))


@given(st.integers(0, 10**6))
def test_oracle_property(seed):
    rng = random.Random(seed)
    reg, root = random_registry(rng)
    assert check_against_oracle(reg, root, rng.randrange(8, 30))
