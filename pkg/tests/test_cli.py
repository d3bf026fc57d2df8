import json
import subprocess
import sys

import pytest

from semverscope.cli import main
from semverscope.synthetic import synthetic_packuments

from .conftest import packument
from .test_diff import BASE, tgz, variant


def _ndjson(path, docs):
    path.write_text("".join(json.dumps(d) + "\n" for d in docs))
    return str(path)


@pytest.fixture
def corpus(tmp_path):
    docs = [
        packument("dep", {"1.0.0": (0, {}), "1.0.1": (10, {}), "2.0.0": (20, {})}),
        packument("down", {"1.0.0": (1, {"dep": "=1.0.0"}), "1.0.1": (13, {"dep": "=1.0.1"})}),
        packument("app", {"1.0.0": (30, {"dep": "^1.0.0", "down": "~1.0.0"})}),
    ]
    return _ndjson(tmp_path / "corpus.ndjson", docs)


@pytest.fixture
def store(tmp_path, corpus):
    st = str(tmp_path / "store")
    assert main(["ingest", "--store", st, corpus]) == 0
    return st


def _manifest(path):
    return json.loads(open(path).read())


def test_ingest_and_mine(tmp_path, store):
    out = tmp_path / "updates.ndjson"
    assert main(["mine", "--store", store, "--out", str(out)]) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert {(r["package"], r["from"], r["to"]) for r in rows} >= {("dep", "1.0.0", "1.0.1"), ("dep", "1.0.1", "2.0.0")}
    m = _manifest(f"{out}.run.json")
    assert m["subcommand"] == "mine" and m["exitCode"] == 0
    assert m["counters"]["updatesMined"] == len(rows) > 0
    assert str(out) in m["outputPaths"]
    ing = _manifest(f"{store}/runs/ingest.run.json")
    assert ing["counters"]["documents"] == 3 and ing["counters"]["inserted"] == 6


def test_usage_errors(tmp_path, store, capsys):
    assert main(["mine", "--store", store, "--out", "x", "--bogus"]) == 2
    assert main(["lag", "--store", store]) == 2
    assert "--as-of" in capsys.readouterr().err
    assert main(["lag", "--store", store, "--as-of", "yesterday"]) == 2
    assert main(["resolve", "--store", store, "--as-of", "2020-02-01T00:00:00Z"]) == 2
    assert main(["mine", "--store", str(tmp_path / "none"), "--out", str(tmp_path / "u")]) == 2


def test_config_hash_ignores_flag_order(tmp_path, store):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    out = str(tmp_path / "u.ndjson")
    main(["mine", "--store", store, "--out", out, "--run-manifest", str(a)])
    main(["mine", "--out", out, "--run-manifest", str(b), "--store", store])
    assert _manifest(a)["configHash"] == _manifest(b)["configHash"]
    main(["mine", "--out", out, "--run-manifest", str(b), "--store", store, "--security"])
    assert _manifest(a)["configHash"] != _manifest(b)["configHash"]


def test_outputs_byte_identical(tmp_path, store):
    for i in (1, 2):
        assert main(["mine", "--store", store, "--out", str(tmp_path / f"u{i}"), "--distribution", str(tmp_path / f"d{i}.csv")]) == 0
        assert main(["classify-constraints", "--store", store, "--out", str(tmp_path / f"c{i}.csv"),
                     "--records-out", str(tmp_path / f"r{i}.ndjson")]) == 0
    for stem in ("u", "d", "c", "r"):
        ext = {"u": "", "d": ".csv", "c": ".csv", "r": ".ndjson"}[stem]
        assert (tmp_path / f"{stem}1{ext}").read_bytes() == (tmp_path / f"{stem}2{ext}").read_bytes()
    assert (tmp_path / "c1.csv").read_text().splitlines()[0] == "year,Exact,Bug,Minor,Geq,Any,Other"


def test_classify_constraint_file(tmp_path, capsys):
    f = tmp_path / "c.txt"
    f.write_text("=1.2.3\n^1.0.0 || ^2.0.0\nlatest\n")
    assert main(["classify-constraints", "--input", str(f), "--run-manifest", str(tmp_path / "m.json")]) == 0
    rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [r["category"] for r in rows] == ["Exact", "Other", "Other"]
    assert rows[1]["intervals"] == ["[1.0.0, 2.0.0)", "[2.0.0, 3.0.0)"]


def test_resolve_and_lockfile(tmp_path, store, capsys):
    lock = tmp_path / "lock.json"
    rc = main(["resolve", "--store", store, "--as-of", "2020-02-01T00:00:00Z", "--package", "app",
               "--lockfile", str(lock), "--run-manifest", str(tmp_path / "m.json")])
    assert rc == 0
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert {r["name"] + "@" + r["version"] for r in recs if r["type"] == "node"} == {"dep@1.0.1", "down@1.0.1"}
    assert json.loads(lock.read_text())["packages"][""]["dependencies"] == {"dep": "1.0.1", "down": "1.0.1"}
    root = tmp_path / "package.json"
    root.write_text(json.dumps({"name": "mine", "dependencies": {"dep": "*"}}))
    assert main(["resolve", "--store", store, "--as-of", "2020-01-15T00:00:00Z", "--root", str(root),
                 "--run-manifest", str(tmp_path / "m.json")]) == 0
    assert '"version":"1.0.1"' in capsys.readouterr().out.replace(" ", "")
    # a package with nothing published yet is a data error, not a crash
    assert main(["resolve", "--store", store, "--as-of", "2019-01-01T00:00:00Z", "--package", "app",
                 "--run-manifest", str(tmp_path / "m.json")]) == 1


def test_lag_and_report(tmp_path, store):
    out = tmp_path / "lag.ndjson"
    assert main(["lag", "--store", store, "--as-of", "2020-03-01T00:00:00Z", "--package", "app", "--out", str(out)]) == 0
    (row,) = [json.loads(line) for line in out.read_text().splitlines()]
    assert row["package"] == "app"
    csv_out, svg = tmp_path / "lag.csv", tmp_path / "lag.svg"
    assert main(["report", "--kind", "lag", "--input", str(out), "--out", str(csv_out), "--svg", str(svg)]) == 0
    assert csv_out.read_text().count("\n") >= 2
    assert svg.read_text().lstrip().startswith("<?xml")


def test_flow(tmp_path, store):
    updates = tmp_path / "u.ndjson"
    main(["mine", "--store", store, "--out", str(updates)])
    out, csv = tmp_path / "flows.ndjson", tmp_path / "flows.csv"
    rc = main(["flow", "--store", store, "--updates", str(updates), "--only-package", "dep", "--downstream", "down",
               "--horizon-days", "30", "--out", str(out), "--csv", str(csv)])
    assert rc == 0
    flows = {json.loads(line)["to"]: json.loads(line) for line in out.read_text().splitlines()}
    assert flows["1.0.1"]["category"] == "DelayedWithIntervention" and flows["1.0.1"]["daysToUnblock"] == 3
    assert flows["2.0.0"]["category"] == "Censored"  # down never moves off =1.0.1
    # a downstream that does not use dep is reported as a data error
    rc = main(["flow", "--store", store, "--updates", str(updates), "--only-package", "dep", "--downstream", "dep",
               "--out", str(out)])
    assert rc == 1
    assert csv.read_text().startswith("category,count,percent")


def test_diff(tmp_path, capsys):
    a, b = tmp_path / "a.tgz", tmp_path / "b.tgz"
    a.write_bytes(tgz(BASE))
    b.write_bytes(variant(**{"lib/index.js": "2"}))
    m = str(tmp_path / "m.json")
    assert main(["diff", "--from", str(a), "--to", str(b), "--run-manifest", m]) == 0
    assert json.loads(capsys.readouterr().out)["class"] == "CodeOnly"
    bad = tmp_path / "bad.tgz"
    bad.write_bytes(b"junk")
    assert main(["diff", "--from", str(a), "--to", str(bad), "--run-manifest", m]) == 1
    pairs = tmp_path / "pairs.ndjson"
    _ndjson(pairs, [{"package": "p", "increment": "bug", "fromTarball": str(a), "toTarball": str(b)},
                    {"package": "p", "increment": "bug", "fromTarball": str(a), "toTarball": str(a)}])
    csv = tmp_path / "c.csv"
    assert main(["diff", "--pairs", str(pairs), "--csv", str(csv), "--out", str(tmp_path / "o.ndjson")]) == 0
    assert csv.read_text().splitlines()[1] == "p,bug,2,50.0,0.0,0.0,50.0"


def test_jobs_match_serial(tmp_path):
    corpus = _ndjson(tmp_path / "c.ndjson", synthetic_packuments(3000, seed=4))
    st = str(tmp_path / "s")
    assert main(["ingest", "--store", st, corpus]) in (0, 1)
    main(["mine", "--store", st, "--out", str(tmp_path / "serial")])
    main(["mine", "--store", st, "--out", str(tmp_path / "par"), "--jobs", "2"])
    assert (tmp_path / "serial").read_bytes() == (tmp_path / "par").read_bytes()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "semverscope", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "ingest" in r.stdout
