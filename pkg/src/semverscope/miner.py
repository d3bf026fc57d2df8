"""Mining chronologically consistent updates from a package history.

Versions are grouped by major number. Within a group, version order must agree
with publish order (ties allowed), otherwise the whole package is rejected.
Consecutive versions of a group form intra-group updates; each pair of
adjacent existing major groups contributes at most one inter-group update,
from the latest version of the lower group published no later than the first
version of the higher group.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Iterable, Sequence

from .semver import IncrementType, Version, increment_type, parse_version
from .store import Advisory, PackageHistory, VersionRecord
from .timeutil import format_timestamp, parse_timestamp


class SecurityEffect(str, enum.Enum):
    NONE = "None"
    INTRODUCES = "IntroducesVuln"
    PATCHES = "PatchesVuln"


class UpdateKind(str, enum.Enum):
    INTRA = "IntraGroup"
    INTER = "InterGroup"


@dataclass(frozen=True)
class Update:
    package: str
    from_version: Version
    to_version: Version
    from_at: datetime
    to_at: datetime
    increment: IncrementType
    kind: UpdateKind
    security_effect: SecurityEffect = SecurityEffect.NONE

    def to_json(self) -> dict:
        return {
            "package": self.package,
            "from": str(self.from_version),
            "to": str(self.to_version),
            "fromAt": format_timestamp(self.from_at),
            "toAt": format_timestamp(self.to_at),
            "increment": self.increment.value,
            "kind": self.kind.value,
            "securityEffect": self.security_effect.value,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Update":
        return cls(
            package=d["package"],
            from_version=parse_version(d["from"]),
            to_version=parse_version(d["to"]),
            from_at=parse_timestamp(d["fromAt"]),
            to_at=parse_timestamp(d["toAt"]),
            increment=IncrementType(d["increment"]),
            kind=UpdateKind(d["kind"]),
            security_effect=SecurityEffect(d.get("securityEffect", "None")),
        )


@dataclass(frozen=True)
class MiningReport:
    package: str
    updates: tuple[Update, ...] = ()
    rejected: bool = False
    rejection_reason: str | None = None


def _update(pkg: str, a: VersionRecord, b: VersionRecord, kind: UpdateKind) -> Update:
    return Update(pkg, a.version, b.version, a.published_at, b.published_at, increment_type(a.version, b.version), kind)


def mine_updates(history: PackageHistory) -> MiningReport:
    releases = [r for r in history.records if not r.version.prerelease]
    groups: dict[int, list[VersionRecord]] = defaultdict(list)
    for r in releases:
        groups[r.version.major].append(r)

    updates: list[Update] = []
    for major in sorted(groups):
        group = sorted(groups[major], key=lambda r: r.version)
        for a, b in zip(group, group[1:]):
            if b.published_at < a.published_at:
                reason = (
                    f"major {major}: {b.version} published {format_timestamp(b.published_at)} "
                    f"before {a.version} ({format_timestamp(a.published_at)})"
                )
                return MiningReport(history.package, (), True, reason)
            updates.append(_update(history.package, a, b, UpdateKind.INTRA))
        groups[major] = group

    majors = sorted(groups)
    for lo_major, hi_major in zip(majors, majors[1:]):
        first = min(groups[hi_major], key=lambda r: (r.published_at, r.version))
        candidates = [r for r in groups[lo_major] if r.published_at <= first.published_at]
        if not candidates:
            continue
        source = max(candidates, key=lambda r: (r.published_at, r.version))
        updates.append(_update(history.package, source, first, UpdateKind.INTER))

    updates.sort(key=lambda u: (u.to_at, u.to_version, u.from_version))
    return MiningReport(history.package, tuple(updates))


def classify_security_effect(
    update: Update,
    advisories: Iterable[Advisory],
    known_versions: Sequence[Version] | None = None,
) -> SecurityEffect:
    """Label an update as patching, introducing, or unrelated to a vulnerability.

    Patching wins when both apply. The "minimal affected version" of an
    advisory is taken over ``known_versions`` when given (the package's
    published releases), and otherwise is the advisory's inclusive lower bound.
    """
    introduces = False
    for adv in advisories:
        if adv.package != update.package:
            continue
        if update.to_version in adv.patched and adv.affects(update.from_version):
            return SecurityEffect.PATCHES
        if not introduces and _minimal_affected(adv, known_versions) == update.to_version:
            introduces = True
    return SecurityEffect.INTRODUCES if introduces else SecurityEffect.NONE


def _minimal_affected(adv: Advisory, known: Sequence[Version] | None) -> Version | None:
    if known is not None:
        hits = [v for v in known if adv.affects(v)]
        return min(hits) if hits else None
    lows = [iv.lo for iv in adv.affected if iv.lo is not None and iv.lo_inclusive]
    if len(lows) < len(adv.affected):
        return None  # some range is unbounded below or open
    return min(lows) if lows else None


def mine_with_security(history: PackageHistory, advisories: Sequence[Advisory]) -> MiningReport:
    report = mine_updates(history)
    advs = [a for a in advisories if a.package == history.package]
    if not advs or report.rejected:
        return report
    known = [r.version for r in history.records if not r.version.prerelease]
    labelled = tuple(
        replace(u, security_effect=classify_security_effect(u, advs, known)) for u in report.updates
    )
    return replace(report, updates=labelled)


@dataclass(frozen=True)
class DistributionRow:
    package: str
    total: int
    fractions: dict[IncrementType, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "package": self.package,
            "updates": self.total,
            **{t.value: round(self.fractions.get(t, 0.0), 6) for t in IncrementType},
        }


def update_type_distribution(
    reports: Iterable[MiningReport],
    segment: SecurityEffect | None = SecurityEffect.NONE,
) -> list[DistributionRow]:
    """Per-package share of bug/minor/major updates within one security segment.

    ``segment=None`` uses every update. Packages with no updates in the
    segment get no row.
    """
    counts: dict[str, dict[IncrementType, int]] = {}
    for rep in reports:
        for u in rep.updates:
            if segment is not None and u.security_effect != segment:
                continue
            row = counts.setdefault(u.package, {t: 0 for t in IncrementType})
            row[u.increment] += 1
    rows = []
    for pkg in sorted(counts):
        total = sum(counts[pkg].values())
        rows.append(DistributionRow(pkg, total, {t: n / total for t, n in counts[pkg].items()}))
    return rows
