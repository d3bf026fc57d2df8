"""``semverscope`` command line.

Exit codes: 0 success, 1 finished with data errors (reported on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from ._io import atomic_write, csv_text, dumps, ndjson_text, read_ndjson, write_csv, write_ndjson
from .timeutil import format_timestamp, parse_timestamp, utcnow

log = logging.getLogger("semverscope")

STORE_ENV = "SEMVERSCOPE_STORE"


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    input_paths: list[str] = field(default_factory=list)
    output_paths: list[str] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""
    counters: dict[str, int] = field(default_factory=dict)
    exit_code: int = 0

    def to_json(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "configHash": self.config_hash,
            "inputPaths": self.input_paths,
            "outputPaths": self.output_paths,
            "startedAt": self.started_at,
            "finishedAt": self.finished_at,
            "counters": dict(sorted(self.counters.items())),
            "exitCode": self.exit_code,
        }


_UNHASHED = {"func", "run_manifest", "verbose", "jobs"}


def config_hash(args: argparse.Namespace) -> str:
    """Digest of the effective options; independent of flag order."""
    opts = {}
    for k, v in vars(args).items():
        if k in _UNHASHED:
            continue
        if isinstance(v, list):
            v = sorted(str(x) for x in v)
        elif v is not None and not isinstance(v, (bool, int, float)):
            v = str(v)
        opts[k] = v
    return hashlib.sha256(dumps(dict(sorted(opts.items()))).encode()).hexdigest()


class Run:
    """Collects counters and paths for the RunManifest of one invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.manifest = RunManifest(args.command, config_hash(args), started_at=format_timestamp(utcnow()))
        self.errors = 0

    def count(self, name: str, n: int = 1) -> None:
        self.manifest.counters[name] = self.manifest.counters.get(name, 0) + n

    def input(self, *paths) -> None:
        self.manifest.input_paths.extend(str(p) for p in paths if p)

    def output(self, *paths) -> None:
        self.manifest.output_paths.extend(str(p) for p in paths if p)

    def error(self, message: str) -> None:
        self.errors += 1
        print(f"error: {message}", file=sys.stderr)

    def progress(self, name: str, every: int = 1000) -> None:
        self.count(name)
        if self.manifest.counters[name] % every == 0:
            log.info("%s: %d", name, self.manifest.counters[name])

    def manifest_path(self) -> Path:
        if self.args.run_manifest:
            return Path(self.args.run_manifest)
        out = getattr(self.args, "out", None)
        if out:
            return Path(f"{out}.run.json")
        store = getattr(self.args, "store", None)
        if store:
            return Path(store) / "runs" / f"{self.args.command}.run.json"
        return Path(f"{self.args.command}.run.json")

    def finish(self, code: int) -> int:
        self.manifest.finished_at = format_timestamp(utcnow())
        self.manifest.exit_code = code
        atomic_write(self.manifest_path(), json.dumps(self.manifest.to_json(), indent=2) + "\n")
        return code


# -- helpers -------------------------------------------------------------------


def _open_store(args, must_exist: bool = True):
    from .store import Store

    path = args.store or os.environ.get(STORE_ENV)
    if not path:
        raise UsageError(f"--store is required (or set {STORE_ENV})")
    if must_exist and not (Path(path) / "log.ndjson").exists():
        raise UsageError(f"no store at {path}")
    args.store = path
    return Store(path)


def _timestamp(text: str):
    try:
        return parse_timestamp(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an RFC3339 timestamp or unix millis: {text!r}")


def _emit(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


# -- subcommands ---------------------------------------------------------------


def cmd_ingest(args, run: Run) -> int:
    from .store import iter_feed

    store = _open_store(args, must_exist=False)
    code = 0
    with store:
        for path in args.inputs:
            run.input(path)
            report = store.ingest_changes(iter_feed(path))
            for k, v in report.counters().items():
                run.count(k, v)
            for s in report.skipped + report.invalid:
                run.error(f"{path}: {s.package} {s.version or ''}: {s.reason}")
            if report.has_errors:
                code = 1
            log.info("%s: %s", path, report.counters())
    return code


def cmd_advisories(args, run: Run) -> int:
    from .store import iter_osv

    store = _open_store(args, must_exist=False)
    run.input(*args.inputs)
    with store:
        report = store.ingest_advisories(iter_osv(args.inputs))
    run.count("advisoriesIngested", report.ingested)
    run.count("advisoriesUnchanged", report.unchanged)
    run.count("skipped", len(report.skipped))
    for s in report.skipped:
        run.error(f"{s.package} {s.version or ''}: {s.reason}")
    return 1 if report.skipped else 0


def _mine_chunk(payload):
    from .miner import mine_with_security

    histories, advisories = payload
    return [mine_with_security(h, advisories) for h in histories]


def cmd_mine(args, run: Run) -> int:
    from .miner import SecurityEffect, update_type_distribution

    store = _open_store(args)
    with store:
        names = sorted(args.packages) if args.packages else store.package_names()
        advisories = store.advisories() if args.security else []
        histories = []
        for name in names:
            try:
                histories.append(store.history(name))
            except KeyError:
                run.error(f"unknown package {name!r}")
    if args.jobs > 1 and len(histories) > 1:
        size = max(1, len(histories) // (args.jobs * 4))
        chunks = [(histories[i : i + size], advisories) for i in range(0, len(histories), size)]
        with ProcessPoolExecutor(args.jobs) as pool:
            reports = [r for part in pool.map(_mine_chunk, chunks) for r in part]
    else:
        reports = _mine_chunk((histories, advisories))

    rows, rejected = [], []
    for rep in reports:
        run.progress("packagesMined")
        if rep.rejected:
            run.count("packagesRejected")
            rejected.append({"package": rep.package, "reason": rep.rejection_reason})
            continue
        for u in rep.updates:
            rows.append(u.to_json())
    run.count("updatesMined", len(rows))
    write_ndjson(args.out, rows)
    run.output(args.out)
    if args.rejected_out:
        write_ndjson(args.rejected_out, rejected)
        run.output(args.rejected_out)
    if args.distribution:
        segments = [None, SecurityEffect.NONE, SecurityEffect.INTRODUCES, SecurityEffect.PATCHES]
        table = []
        for seg in segments:
            for row in update_type_distribution(reports, seg):
                d = row.to_json()
                table.append([seg.value if seg else "All", d["package"], d["updates"], d["bug"], d["minor"], d["major"]])
        write_csv(args.distribution, ["segment", "package", "updates", "bug", "minor", "major"], table)
        run.output(args.distribution)
    return 1 if run.errors else 0


def _constraint_records(store):
    for h in store.histories():
        for rec in sorted(h.records, key=lambda r: r.version):
            for dep in sorted(rec.dependencies):
                c = rec.dependencies[dep]
                yield {
                    "package": h.package,
                    "version": str(rec.version),
                    "publishedAt": format_timestamp(rec.published_at),
                    "dependency": dep,
                    "constraint": c.raw,
                    "category": c.category.value,
                }


def cmd_classify_constraints(args, run: Run) -> int:
    from .analysis import constraint_usage_by_year
    from .semver import Category, parse_constraint

    if args.input:
        run.input(args.input)
        rows = []
        with open(args.input, encoding="utf-8") as fh:
            for line in fh:
                text = line.rstrip("\n")
                c = parse_constraint(text)
                run.progress(f"constraints{c.category.value}")
                rows.append(
                    {
                        "constraint": text,
                        "category": c.category.value,
                        "intervals": [str(iv) for iv in c.intervals],
                        "diagnostic": c.diagnostic,
                    }
                )
        _emit(args.out, ndjson_text(rows))
        run.output(args.out)
        return 0
    store = _open_store(args)
    years = range(args.from_year, args.to_year + 1) if args.from_year and args.to_year else None
    with store:
        table = constraint_usage_by_year(store, years)
        if args.records_out:
            n = write_ndjson(args.records_out, _constraint_records(store))
            run.count("constraintsClassified", n)
            run.output(args.records_out)
    header = ["year"] + [c.value for c in Category]
    body = [[y] + [round(table[y][c], 6) for c in Category] for y in sorted(table)]
    run.count("years", len(body))
    _emit(args.out, csv_text(header, body))
    run.output(args.out)
    return 0


def cmd_serve(args, run: Run) -> int:
    from .proxy import LocalBackend, ProxyServer, UpstreamBackend

    host, _, port = args.listen.rpartition(":")
    if not port.isdigit():
        raise UsageError(f"--listen must be addr:port, got {args.listen!r}")
    if args.mode == "local":
        backend = LocalBackend(_open_store(args))
    else:
        if not args.upstream:
            raise UsageError("--upstream is required in upstream mode")
        backend = UpstreamBackend(args.upstream, args.cache_dir)
    server = ProxyServer((host or "127.0.0.1", int(port)), backend)
    print(f"serving {args.mode} registry at {server.base_url}/t/{{asOf}}/", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        status = backend.status() if args.mode == "upstream" else {}
        for k in ("cacheEntries", "cacheHits", "cacheMisses"):
            if k in status:
                run.count(k, status[k])
    return 0


def _parse_spec(spec: str):
    from .semver import parse_version

    name, sep, version = spec.rpartition("@")
    if not sep or not name:
        return spec, None
    return name, parse_version(version)


def _npm_resolve(args, run: Run, store):
    from .npmdriver import NpmDriver
    from .store import UnknownPackage

    with NpmDriver(store) as drv:
        if args.root:
            run.input(args.root)
            with open(args.root, encoding="utf-8") as fh:
                manifest = json.load(fh)
            deps = dict(manifest.get("dependencies") or {})
            if args.include_dev:
                for k, v in (manifest.get("devDependencies") or {}).items():
                    deps.setdefault(k, v)
            return drv.resolve_deps(deps, args.as_of, manifest.get("name") or "<root>")
        name, version = _parse_spec(args.package)
        h = store.history_as_of(name, args.as_of)
        rec = h.get(version) if version is not None else h.latest_release()
        if rec is None:
            raise UnknownPackage(args.package)
        return drv(name, rec.version, args.as_of)


def cmd_resolve(args, run: Run) -> int:
    from .resolver import ResolutionFailed, resolve_manifest, resolve_package
    from .store import UnknownPackage

    if bool(args.package) == bool(args.root):
        raise UsageError("give exactly one of --package or --root")
    store = _open_store(args)
    try:
        with store:
            if args.resolver == "npm":
                graph = _npm_resolve(args, run, store)
            elif args.root:
                run.input(args.root)
                with open(args.root, encoding="utf-8") as fh:
                    graph = resolve_manifest(json.load(fh), args.as_of, store, args.include_dev)
            else:
                name, version = _parse_spec(args.package)
                graph = resolve_package(name, args.as_of, store, version)
    except (ResolutionFailed, UnknownPackage) as exc:
        run.error(str(exc))
        return 1
    run.count("nodes", len(graph.nodes) - 1)
    run.count("edges", len(graph.edges))
    _emit(args.out, ndjson_text(graph.to_records()))
    run.output(args.out)
    if args.lockfile:
        atomic_write(args.lockfile, json.dumps(graph.lockfile(), indent=2) + "\n")
        run.output(args.lockfile)
    return 0


def cmd_lag(args, run: Run) -> int:
    from .analysis import lag_of_latest
    from .resolver import ResolutionFailed
    from .store import UnknownPackage

    store = _open_store(args)
    rows, entries = [], []
    with store:
        names = sorted(args.package) if args.package else store.package_names()
        for name in names:
            try:
                lag = lag_of_latest(store, name, args.as_of, at_publish=not args.at_as_of)
            except (ResolutionFailed, UnknownPackage) as exc:
                run.error(str(exc))
                run.count("packagesFailed")
                continue
            run.progress("packagesSolved")
            rows.append(lag.to_json())
            for e in lag.report.entries:
                entries.append({"package": name, **e.to_json()})
    _emit(args.out, ndjson_text(rows))
    run.output(args.out)
    if args.entries_out:
        write_ndjson(args.entries_out, entries)
        run.output(args.entries_out)
    return 1 if run.errors else 0


def cmd_flow(args, run: Run) -> int:
    from .analysis import (
        PreconditionViolated,
        classify_flow,
        flow_summary,
        sample_flows,
    )
    from .miner import Update
    from .resolver import ResolutionFailed
    from .store import UnknownPackage

    run.input(args.updates)
    updates = [Update.from_json(d) for d in read_ndjson(args.updates)]
    if args.before:
        latest = {}
        for u in updates:
            if u.to_at < args.before and (u.package not in latest or u.to_at > latest[u.package].to_at):
                latest[u.package] = u
        updates = [latest[k] for k in sorted(latest)]
    if args.only_package:
        updates = [u for u in updates if u.package in set(args.only_package)]
    store = _open_store(args)
    outcomes = []
    driver = None
    if args.resolver == "npm":
        from .npmdriver import NpmDriver

        driver = NpmDriver(store)
    with store:
        if args.downstream:
            for u in updates:
                for d in sorted(args.downstream):
                    try:
                        outcomes.append(classify_flow(u, d, store, driver, args.horizon_days, args.frozen))
                    except (PreconditionViolated, ResolutionFailed, UnknownPackage) as exc:
                        run.error(f"{u.package} {u.from_version}->{u.to_version} via {d}: {exc}")
        else:
            outcomes, skipped = sample_flows(
                store, updates, args.per_update, args.seed, args.horizon_days, driver, args.frozen
            )
            run.count("pairsSkipped", skipped)
    if driver is not None:
        driver.close()
    for o in outcomes:
        run.count(f"flow{o.category.value}")
    run.count("flowsSolved", len(outcomes))
    _emit(args.out, ndjson_text(o.to_json() for o in outcomes))
    run.output(args.out)
    if args.csv:
        summary = flow_summary(outcomes)
        header = ["category", "count", "percent", "bugPercent", "minorPercent", "majorPercent"]
        body = [
            [cat, s["count"], round(s["percent"], 6), round(s["bugPercent"], 6), round(s["minorPercent"], 6), round(s["majorPercent"], 6)]
            for cat, s in summary.items()
        ]
        write_csv(args.csv, header, body)
        run.output(args.csv)
    return 1 if run.errors else 0


def cmd_diff(args, run: Run) -> int:
    from .diff import CorruptArchive, classify_update_contents, content_distribution

    if bool(args.pairs) == bool(args.old and args.new):
        raise UsageError("give --from and --to, or --pairs")
    if args.pairs:
        run.input(args.pairs)
        rows, classified = [], []
        for d in read_ndjson(args.pairs):
            try:
                res = classify_update_contents(d["fromTarball"], d["toTarball"])
            except CorruptArchive as exc:
                run.error(str(exc))
                continue
            run.progress("pairsDiffed")
            rows.append({"package": d.get("package"), "increment": d.get("increment"), "from": d.get("from"), "to": d.get("to"), **res.to_json()})
            if d.get("package") and d.get("increment"):
                classified.append((d["package"], d["increment"], res.change_class))
        _emit(args.out, ndjson_text(rows))
        run.output(args.out)
        if args.csv:
            dist = content_distribution(classified)
            header = ["package", "increment", "updates", "CodeOnly", "DepsOnly", "Both", "Neither"]
            body = [[r.package, r.increment.value, r.total] + [round(100 * r.fractions[c], 6) for c in r.fractions] for r in dist]
            write_csv(args.csv, header, body)
            run.output(args.csv)
        return 1 if run.errors else 0
    run.input(args.old, args.new)
    try:
        res = classify_update_contents(args.old, args.new)
    except CorruptArchive as exc:
        run.error(str(exc))
        return 1
    run.count(f"class{res.change_class.value}")
    _emit(args.out, dumps(res.to_json()) + "\n")
    run.output(args.out)
    return 0


def cmd_report(args, run: Run) -> int:
    from . import report

    run.input(args.input)
    if args.kind == "constraints":
        store = _open_store(args)
        with store:
            header, rows = report.constraints_table(store)
    else:
        if not args.input:
            raise UsageError(f"--input is required for --kind {args.kind}")
        header, rows = report.TABLES[args.kind](list(read_ndjson(args.input)))
    run.count("rows", len(rows))
    _emit(args.out, csv_text(header, rows))
    run.output(args.out)
    if args.svg:
        report.render_svg(args.kind, header, rows, args.svg)
        run.output(args.svg)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semverscope", description="Historical semver analysis for npm-style registries.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--store", default=os.environ.get(STORE_ENV), help=f"store directory (default ${STORE_ENV})")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--run-manifest", help="where to write the run manifest")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("ingest", cmd_ingest, "ingest packuments or _changes responses")
    sp.add_argument("inputs", nargs="+", help="NDJSON packument dumps or _changes JSON")

    sp = add("advisories", cmd_advisories, "import OSV advisories")
    sp.add_argument("inputs", nargs="+", help="OSV JSON files or directories")

    sp = add("mine", cmd_mine, "mine updates to NDJSON")
    sp.add_argument("--out", required=True)
    sp.add_argument("--packages", nargs="*")
    sp.add_argument("--security", action="store_true", help="label updates with advisory effects")
    sp.add_argument("--rejected-out")
    sp.add_argument("--distribution", help="per-package update-type CSV")

    sp = add("classify-constraints", cmd_classify_constraints, "constraint categories by year, or of a list")
    sp.add_argument("--input", help="text file with one constraint per line")
    sp.add_argument("--out", default="-")
    sp.add_argument("--from-year", type=int)
    sp.add_argument("--to-year", type=int)
    sp.add_argument("--records-out", help="NDJSON, one record per (package, version, dependency)")

    sp = add("serve", cmd_serve, "run the time-travel registry proxy")
    sp.add_argument("--listen", default="127.0.0.1:4873")
    sp.add_argument("--mode", choices=["local", "upstream"], default="local")
    sp.add_argument("--upstream", help="upstream registry URL")
    sp.add_argument("--cache-dir")

    sp = add("resolve", cmd_resolve, "time-filtered dependency resolution")
    sp.add_argument("--as-of", type=_timestamp, required=True)
    sp.add_argument("--resolver", choices=["flat", "npm"], default="flat")
    sp.add_argument("--package", help="NAME or NAME@VERSION")
    sp.add_argument("--root", help="package.json to resolve")
    sp.add_argument("--include-dev", action="store_true")
    sp.add_argument("--out", default="-")
    sp.add_argument("--lockfile")

    sp = add("lag", cmd_lag, "technical lag of latest releases")
    sp.add_argument("--as-of", type=_timestamp, required=True)
    sp.add_argument("--package", action="append")
    sp.add_argument("--at-as-of", action="store_true", help="resolve at --as-of instead of the release's publish time")
    sp.add_argument("--out", default="-")
    sp.add_argument("--entries-out")

    sp = add("flow", cmd_flow, "update-flow experiment")
    sp.add_argument("--updates", required=True, help="NDJSON from `mine`")
    sp.add_argument("--downstream", action="append")
    sp.add_argument("--only-package", action="append")
    sp.add_argument("--before", type=_timestamp, help="use each package's latest update before this instant")
    sp.add_argument("--per-update", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--horizon-days", type=int, default=90)
    sp.add_argument("--frozen", action="store_true", help="keep the pre-update downstream version")
    sp.add_argument("--resolver", choices=["flat", "npm"], default="flat")
    sp.add_argument("--out", default="-")
    sp.add_argument("--csv")

    sp = add("diff", cmd_diff, "classify tarball changes")
    sp.add_argument("--from", dest="old")
    sp.add_argument("--to", dest="new")
    sp.add_argument("--pairs", help="NDJSON with fromTarball/toTarball (+package, increment)")
    sp.add_argument("--out", default="-")
    sp.add_argument("--csv")

    sp = add("report", cmd_report, "summary CSV tables and SVG plots")
    sp.add_argument("--kind", required=True, choices=["update-types", "constraints", "lag", "flow", "delayed-days", "contents"])
    sp.add_argument("--input")
    sp.add_argument("--out", default="-")
    sp.add_argument("--svg")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    run = Run(args)
    try:
        code = args.func(args, run)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"semverscope {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return run.finish(code)


if __name__ == "__main__":
    sys.exit(main())
