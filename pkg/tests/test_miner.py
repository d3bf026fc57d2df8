import random

from hypothesis import given
from hypothesis import strategies as st

from semverscope.miner import (
    MiningReport,
    SecurityEffect,
    Update,
    UpdateKind,
    classify_security_effect,
    mine_updates,
    mine_with_security,
    update_type_distribution,
)
from semverscope.semver import IncrementType, Interval, Version, parse_version
from semverscope.store import Advisory, PackageHistory, VersionRecord

from .conftest import day
from .oracles import oracle_mine


def hist(name, entries):
    """entries: [(version, day)]"""
    return PackageHistory(name, tuple(VersionRecord(name, parse_version(v), day(d)) for v, d in entries))


def pairs(report):
    return {(str(u.from_version), str(u.to_version)) for u in report.updates}


def test_single_version():
    r = mine_updates(hist("p", [("1.0.0", 0)]))
    assert r.updates == () and not r.rejected


def test_group_order_violation_rejects():
    r = mine_updates(hist("p", [("1.0.1", 0), ("1.0.0", 1)]))
    assert r.rejected and r.updates == () and r.rejection_reason


def test_gap_in_majors():
    r = mine_updates(hist("p", [("1.0.0", 0), ("3.0.0", 1)]))
    (u,) = r.updates
    assert (str(u.from_version), str(u.to_version)) == ("1.0.0", "3.0.0")
    assert u.increment is IncrementType.MAJOR and u.kind is UpdateKind.INTER


def test_prereleases_dropped():
    r = mine_updates(hist("p", [("1.0.0", 0), ("1.1.0-beta.1", 1), ("1.1.0", 2)]))
    assert pairs(r) == {("1.0.0", "1.1.0")}


def test_equal_timestamps_accepted():
    r = mine_updates(hist("p", [("1.0.0", 0), ("1.0.1", 0)]))
    assert not r.rejected and pairs(r) == {("1.0.0", "1.0.1")}


def test_no_inter_update_without_earlier_source():
    r = mine_updates(hist("p", [("2.0.0", 0), ("1.0.0", 1)]))
    assert pairs(r) == set()


def test_update_json_round_trip():
    (u,) = mine_updates(hist("p", [("1.0.0", 0), ("1.0.1", 1)])).updates
    assert Update.from_json(u.to_json()) == u
    assert u.to_json()["securityEffect"] == "None"


version_st = st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2))
history_st = st.lists(
    st.tuples(version_st, st.integers(0, 6), st.booleans()), min_size=0, max_size=8, unique_by=lambda x: x[0]
)


def _entries(raw):
    out = []
    for (M, m, p), d, pre in raw:
        v = f"{M}.{m}.{p}" + ("-rc.1" if pre and M == 2 else "")
        out.append((v, d))
    return out


@given(history_st)
def test_matches_pairwise_oracle(raw):
    entries = _entries(raw)
    r = mine_updates(hist("p", entries))
    rejected, expected = oracle_mine([(v, day(d)) for v, d in entries])
    assert r.rejected == rejected
    assert pairs(r) == expected


@given(history_st)
def test_update_invariants(raw):
    r = mine_updates(hist("p", _entries(raw)))
    targets = [u.to_version for u in r.updates if u.kind is UpdateKind.INTRA]
    assert len(targets) == len(set(targets))
    for u in r.updates:
        assert u.from_version < u.to_version and u.from_at <= u.to_at
        assert not u.from_version.prerelease and not u.to_version.prerelease
    if r.rejected:
        assert r.updates == ()


def test_deterministic_under_record_permutation():
    entries = [("1.0.0", 0), ("2.0.0", 1), ("1.0.1", 2), ("2.0.1", 3), ("2.1.0", 4)]
    base = mine_updates(hist("p", entries))
    rng = random.Random(3)
    for _ in range(10):
        rng.shuffle(entries)
        assert mine_updates(hist("p", entries)) == base


# -- security ------------------------------------------------------------------


def _adv(lo=None, hi=None, lo_inc=True, hi_inc=False, patched=()):
    lo = parse_version(lo) if lo else None
    hi = parse_version(hi) if hi else None
    return Advisory("A1", "p", (Interval(lo, hi, lo_inc, hi_inc),), tuple(parse_version(v) for v in patched))


def _u(a, b):
    return Update("p", parse_version(a), parse_version(b), day(0), day(1), IncrementType.BUG, UpdateKind.INTRA)


def test_security_effects():
    assert classify_security_effect(_u("5.2.1", "5.2.2"), [_adv("5.2.2", "5.2.3")]) is SecurityEffect.INTRODUCES
    assert classify_security_effect(_u("1.6.0", "1.7.0"), [_adv(None, "1.7.0", patched=["1.7.0"])]) is SecurityEffect.PATCHES
    assert classify_security_effect(_u("1.0.0", "1.0.1"), []) is SecurityEffect.NONE
    # update into the middle of a range does not introduce
    assert classify_security_effect(_u("5.2.2", "5.2.3"), [_adv("5.2.2", "5.2.9")]) is SecurityEffect.NONE


def test_patch_takes_precedence():
    advs = [_adv("1.0.0", "1.0.1", patched=["1.0.1"]), _adv("1.0.1", "1.0.5")]
    assert classify_security_effect(_u("1.0.0", "1.0.1"), advs) is SecurityEffect.PATCHES


def test_minimal_uses_known_versions():
    # advisory ">=5.2.0 <5.2.3" but 5.2.0 and 5.2.1 were never published
    adv = _adv("5.2.0", "5.2.3")
    known = [Version(5, 1, 0), Version(5, 2, 2)]
    assert classify_security_effect(_u("5.1.0", "5.2.2"), [adv], known) is SecurityEffect.INTRODUCES
    assert classify_security_effect(_u("5.1.0", "5.2.2"), [adv]) is SecurityEffect.NONE


def test_mine_with_security():
    h = hist("p", [("5.2.1", 0), ("5.2.2", 1), ("5.2.3", 2)])
    r = mine_with_security(h, [_adv("5.2.2", "5.2.3", patched=["5.2.3"])])
    effects = {str(u.to_version): u.security_effect for u in r.updates}
    assert effects == {"5.2.2": SecurityEffect.INTRODUCES, "5.2.3": SecurityEffect.PATCHES}


# -- distribution --------------------------------------------------------------


def _rep(pkg, incs, effect=SecurityEffect.NONE):
    ups = tuple(
        Update(pkg, Version(1, 0, i), Version(1, 0, i + 1), day(i), day(i + 1), t, UpdateKind.INTRA, effect)
        for i, t in enumerate(incs)
    )
    return MiningReport(pkg, ups)


def test_distribution_arithmetic():
    (row,) = update_type_distribution([_rep("a", [IncrementType.BUG, IncrementType.BUG, IncrementType.MAJOR])])
    assert row.total == 3
    assert row.fractions[IncrementType.BUG] == 2 / 3
    assert row.fractions[IncrementType.MINOR] == 0
    assert row.fractions[IncrementType.MAJOR] == 1 / 3


def test_distribution_per_package_and_segment():
    reps = [_rep("a", [IncrementType.BUG]), _rep("b", [IncrementType.MAJOR]),
            _rep("c", [IncrementType.MINOR], SecurityEffect.PATCHES)]
    rows = update_type_distribution(reps)
    assert [r.package for r in rows] == ["a", "b"]
    assert [r.package for r in update_type_distribution(reps, SecurityEffect.PATCHES)] == ["c"]
    assert update_type_distribution(reps, SecurityEffect.INTRODUCES) == []
    assert len(update_type_distribution(reps, None)) == 3


@given(st.permutations([_rep("a", [IncrementType.BUG]), _rep("b", [IncrementType.MAJOR, IncrementType.BUG])]))
def test_distribution_permutation_invariant(reps):
    assert update_type_distribution(reps) == update_type_distribution(sorted(reps, key=lambda r: r.package))
