import pytest

from semverscope.npmdriver import NPM_KIND, NpmDriver, npm_available, npm_dry_run
from semverscope.resolver import resolve
from semverscope.timeutil import parse_timestamp

from .conftest import make_store
from .npm_fixture import EXPECTED, REGISTRY, ROOT_DEPS

pytestmark = [pytest.mark.npm, pytest.mark.skipif(not npm_available(), reason="npm not on PATH")]


@pytest.fixture(scope="module")
def driver():
    store = make_store(*REGISTRY)
    with NpmDriver(store) as drv:
        yield drv
    store.close()


@pytest.mark.parametrize("as_of", sorted(EXPECTED))
def test_dry_run_sees_only_the_past(driver, as_of):
    got = npm_dry_run(driver.registry_url(as_of), ROOT_DEPS)
    assert got == {name: {v} for name, v in EXPECTED[as_of].items()}


@pytest.mark.parametrize("as_of", sorted(EXPECTED))
def test_lockfile_graph_matches_flat_resolver(driver, as_of):
    t = parse_timestamp(as_of)
    g = driver.resolve_deps(ROOT_DEPS, t)
    assert g.resolver_kind == NPM_KIND
    assert {n.name: str(n.version) for n in g.dependency_nodes()} == EXPECTED[as_of]
    flat = resolve(ROOT_DEPS, t, driver.store)
    assert {n.label() for n in g.dependency_nodes()} == {n.label() for n in flat.dependency_nodes()}
    assert all(n.published_at <= t for n in g.dependency_nodes())
