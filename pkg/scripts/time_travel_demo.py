"""Serve a small registry through the time-travel proxy and resolve it at several instants.

Uses the flat resolver always, and a real npm client too when one is on PATH.

    python scripts/time_travel_demo.py
"""

import argparse
import tempfile

from semverscope.resolver import resolve
from semverscope.store import Store
from semverscope.timeutil import format_timestamp, parse_timestamp

REGISTRY = {
    "alpha": {"1.0.0": ("2020-01-01", {"beta": "^1.0.0"}), "1.1.0": ("2020-03-01", {"beta": "^1.0.0"}),
              "2.0.0": ("2020-05-01", {"beta": "^1.1.0"})},
    "beta": {"1.0.0": ("2020-01-02", {}), "1.0.1": ("2020-03-15", {}), "1.1.0": ("2020-06-01", {})},
}
INSTANTS = ["2020-01-15T00:00:00Z", "2020-03-16T00:00:00Z", "2020-07-01T00:00:00Z"]


def packuments():
    for name, versions in REGISTRY.items():
        times = {v: f"{d}T00:00:00.000Z" for v, (d, _) in versions.items()}
        times["created"] = min(times.values())
        times["modified"] = max(times.values())
        yield {
            "name": name,
            "dist-tags": {"latest": max(versions, key=lambda v: tuple(map(int, v.split("."))))},
            "versions": {v: {"name": name, "version": v, "dependencies": deps} for v, (_, deps) in versions.items()},
            "time": times,
        }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--deps", default="alpha@^1.0.0", help="comma separated NAME@RANGE list")
    ap.add_argument("--no-npm", action="store_true")
    args = ap.parse_args()
    deps = dict(d.rsplit("@", 1) for d in args.deps.split(","))

    with tempfile.TemporaryDirectory() as tmp, Store(f"{tmp}/store") as store:
        store.ingest_changes(packuments())
        driver = None
        if not args.no_npm:
            from semverscope.npmdriver import NpmDriver, npm_available

            if npm_available():
                driver = NpmDriver(store)
                print(f"proxy: {driver.registry_url(INSTANTS[0])}")
        for text in INSTANTS:
            as_of = parse_timestamp(text)
            flat = sorted(n.label() for n in resolve(deps, as_of, store).dependency_nodes())
            print(f"{format_timestamp(as_of)}  flat: {' '.join(flat)}")
            if driver is not None:
                npm = sorted(n.label() for n in driver.resolve_deps(deps, as_of).dependency_nodes())
                print(f"{'':24}  npm:  {' '.join(npm)}")
        if driver is not None:
            driver.close()


if __name__ == "__main__":
    main()
