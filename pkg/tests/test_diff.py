import io
import json
import tarfile

import pytest
from hypothesis import given
from hypothesis import strategies as st

from semverscope.diff import (
    ChangeClass,
    ChangeKind,
    CorruptArchive,
    classify_update_contents,
    content_distribution,
)
from semverscope.semver import IncrementType


def tgz(files: dict[str, bytes | str], root="package", mtime=0) -> bytes:
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w:gz") as tf:
        for path, data in sorted(files.items()):
            data = data.encode() if isinstance(data, str) else data
            info = tarfile.TarInfo(f"{root}/{path}" if root else path)
            info.size = len(data)
            info.mtime = mtime
            tf.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def manifest(deps=None, indent=2, **extra):
    return json.dumps({"name": "p", "version": "1.0.0", "dependencies": deps or {}, **extra}, indent=indent)


BASE = {"package.json": manifest({"a": "^1.0.0"}), "lib/index.js": "module.exports = 1;\n", "README.md": "# p\n"}


def variant(**changes):
    files = dict(BASE)
    files.update(changes)
    return tgz(files)


def test_identical_is_neither():
    r = classify_update_contents(tgz(BASE), tgz(BASE))
    assert r.change_class is ChangeClass.NEITHER and r.changes == ()


def test_code_only():
    r = classify_update_contents(tgz(BASE), variant(**{"lib/index.js": "module.exports = 2;\n"}))
    assert r.change_class is ChangeClass.CODE_ONLY
    assert [(c.path, c.kind) for c in r.changes] == [("lib/index.js", ChangeKind.MODIFIED)]


def test_deps_only():
    r = classify_update_contents(tgz(BASE), variant(**{"package.json": manifest({"a": "^1.1.0"})}))
    assert r.change_class is ChangeClass.DEPS_ONLY


def test_both():
    r = classify_update_contents(
        tgz(BASE), variant(**{"package.json": manifest({"a": "^2.0.0"}), "src/new.ts": "export {}\n"})
    )
    assert r.change_class is ChangeClass.BOTH
    assert ("src/new.ts", ChangeKind.ADDED) in [(c.path, c.kind) for c in r.changes]


def test_readme_only_is_neither():
    r = classify_update_contents(tgz(BASE), variant(**{"README.md": "# p\nmore\n"}))
    assert r.change_class is ChangeClass.NEITHER and len(r.changes) == 1


def test_whitespace_manifest_edit_not_deps():
    r = classify_update_contents(tgz(BASE), variant(**{"package.json": manifest({"a": "^1.0.0"}, indent=4)}))
    assert r.change_class is ChangeClass.NEITHER
    assert not r.deps_changed and r.changes[0].path == "package.json"


def test_version_bump_in_manifest_not_deps():
    r = classify_update_contents(tgz(BASE), variant(**{"package.json": manifest({"a": "^1.0.0"}, description="x")}))
    assert r.change_class is ChangeClass.NEITHER


@pytest.mark.parametrize("field", ["devDependencies", "peerDependencies", "optionalDependencies"])
def test_other_dependency_fields(field):
    r = classify_update_contents(tgz(BASE), variant(**{"package.json": manifest({"a": "^1.0.0"}, **{field: {"b": "*"}})}))
    assert r.change_class is ChangeClass.DEPS_ONLY


def test_uppercase_extension_and_rename():
    old = tgz({**BASE, "lib/X.JS": "1"})
    new = tgz({**BASE, "lib/Y.JS": "1"})
    r = classify_update_contents(old, new)
    assert r.change_class is ChangeClass.CODE_ONLY
    assert {c.kind for c in r.changes} == {ChangeKind.ADDED, ChangeKind.REMOVED}


def test_non_code_extensions():
    r = classify_update_contents(tgz(BASE), variant(**{"bin/run.sh": "echo", "style.css": "a{}", "lib/x.json": "{}"}))
    assert r.change_class is ChangeClass.NEITHER


def test_mtime_and_root_ignored():
    a = tgz(BASE, mtime=0)
    b = tgz(BASE, root="node", mtime=1_600_000_000)
    assert classify_update_contents(a, b).change_class is ChangeClass.NEITHER


def test_paths_and_corrupt(tmp_path):
    a = tmp_path / "a.tgz"
    a.write_bytes(tgz(BASE))
    assert classify_update_contents(a, str(a)).change_class is ChangeClass.NEITHER
    bad = tmp_path / "bad.tgz"
    bad.write_bytes(tgz(BASE)[:40])
    with pytest.raises(CorruptArchive) as exc:
        classify_update_contents(a, bad)
    assert exc.value.path == str(bad)
    with pytest.raises(CorruptArchive):
        classify_update_contents(b"not a tarball", a)


files_st = st.dictionaries(
    st.sampled_from(["lib/index.js", "a.ts", "README.md", "x.css", "b.jsx"]),
    st.sampled_from(["1", "2", "3"]),
    max_size=4,
)
deps_st = st.dictionaries(st.sampled_from(["a", "b"]), st.sampled_from(["^1.0.0", "~2.0.0"]), max_size=2)


@given(files_st, deps_st, files_st, deps_st)
def test_symmetric_and_exhaustive(f1, d1, f2, d2):
    a = tgz({**f1, "package.json": manifest(d1)})
    b = tgz({**f2, "package.json": manifest(d2)})
    r1, r2 = classify_update_contents(a, b), classify_update_contents(b, a)
    assert r1.change_class is r2.change_class
    assert sum(r1.change_class is c for c in ChangeClass) == 1
    assert r1.code_changed == any(p.endswith((".js", ".ts", ".jsx")) and f1.get(p) != f2.get(p) for p in set(f1) | set(f2))
    assert r1.deps_changed == (d1 != d2)


def test_content_distribution():
    rows = content_distribution([
        ("p", IncrementType.BUG, ChangeClass.CODE_ONLY),
        ("p", IncrementType.BUG, ChangeClass.NEITHER),
        ("q", IncrementType.BUG, ChangeClass.BOTH),
    ])
    assert [(r.package, r.increment) for r in rows] == [("p", IncrementType.BUG), ("q", IncrementType.BUG)]
    assert rows[0].to_json() == {"package": "p", "increment": "bug", "updates": 2,
                                 "CodeOnly": 50.0, "DepsOnly": 0.0, "Both": 0.0, "Neither": 50.0}
