"""Ecosystem statistics: constraint usage, technical lag, update flows."""

from __future__ import annotations

import enum
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Iterable, Sequence

from .miner import Update
from .resolver import ResolutionFailed, ResolvedGraph, resolve_package
from .semver import Category, IncrementType, Version
from .store import PackageHistory, Store, UnknownPackage, VersionRecord
from .timeutil import DAY, days_between, format_timestamp

# -- constraint usage ----------------------------------------------------------


def _year_representatives(history: PackageHistory, years) -> dict[int, VersionRecord]:
    reps: dict[int, VersionRecord] = {}
    for rec in history.records:  # sorted by publish time, so the last wins
        if rec.version.prerelease:
            continue
        y = rec.published_at.year
        if years is None or y in years:
            reps[y] = rec
    return reps


def constraint_usage_by_year(
    source: Store | Iterable[PackageHistory],
    years: Iterable[int] | None = None,
) -> dict[int, dict[Category, float]]:
    """Percentage of dependency constraints per category, per year.

    Each package contributes only its most recent release of each year.
    Years without any counted constraint are absent.
    """
    years = set(years) if years is not None else None
    histories = source.histories() if isinstance(source, Store) else source
    counts: dict[int, Counter] = defaultdict(Counter)
    for h in histories:
        for y, rec in _year_representatives(h, years).items():
            for c in rec.dependencies.values():
                counts[y][c.category] += 1
    table = {}
    for y in sorted(counts):
        total = sum(counts[y].values())
        if total:
            table[y] = {cat: 100.0 * counts[y][cat] / total for cat in Category}
    return table


# -- technical lag -------------------------------------------------------------


@dataclass(frozen=True)
class LagEntry:
    dependency: str
    resolved_version: Version
    resolved_at: datetime
    newest_eligible_at: datetime | None = None
    newest_eligible_version: Version | None = None

    @property
    def out_of_date(self) -> bool:
        return self.newest_eligible_at is not None

    @property
    def out_of_date_days(self) -> float | None:
        if self.newest_eligible_at is None:
            return None
        return days_between(self.resolved_at, self.newest_eligible_at)

    def to_json(self) -> dict:
        return {
            "dependency": self.dependency,
            "version": str(self.resolved_version),
            "resolvedAt": format_timestamp(self.resolved_at),
            "newestEligibleAt": format_timestamp(self.newest_eligible_at) if self.newest_eligible_at else None,
            "newestEligibleVersion": str(self.newest_eligible_version) if self.newest_eligible_version else None,
            "outOfDateDays": round(self.out_of_date_days, 6) if self.out_of_date else None,
        }


@dataclass(frozen=True)
class LagReport:
    as_of: datetime
    entries: tuple[LagEntry, ...]

    @property
    def out_of_date(self) -> list[LagEntry]:
        return [e for e in self.entries if e.out_of_date]

    @property
    def percent_out_of_date(self) -> float | None:
        if not self.entries:
            return None
        return 100.0 * len(self.out_of_date) / len(self.entries)

    @property
    def mean_out_of_date_days(self) -> float | None:
        ood = self.out_of_date
        if not ood:
            return None
        return sum(e.out_of_date_days for e in ood) / len(ood)


def compute_lag(graph: ResolvedGraph, store: Store) -> LagReport:
    """Out-of-date check for every resolved dependency at ``graph.as_of``.

    A dependency at (V, T) is out of date when some release V' > V was
    published at T' with T < T' < as_of (both strict). Lag is measured to the
    largest such T'.
    """
    t_p = graph.as_of
    entries = []
    histories: dict[str, PackageHistory] = {}
    for node in graph.dependency_nodes():
        h = histories.get(node.name)
        if h is None:
            h = histories[node.name] = store.history(node.name)
        best: VersionRecord | None = None
        for rec in h.records:
            if rec.version.prerelease or not rec.version > node.version:
                continue
            if node.published_at < rec.published_at < t_p:
                if best is None or (rec.published_at, rec.version) > (best.published_at, best.version):
                    best = rec
        entries.append(
            LagEntry(
                node.name,
                node.version,
                node.published_at,
                best.published_at if best else None,
                best.version if best else None,
            )
        )
    return LagReport(t_p, tuple(entries))


@dataclass(frozen=True)
class PackageLag:
    package: str
    version: Version
    as_of: datetime
    report: LagReport

    def to_json(self) -> dict:
        r = self.report
        return {
            "package": self.package,
            "version": str(self.version),
            "asOf": format_timestamp(self.as_of),
            "dependencies": len(r.entries),
            "outOfDate": len(r.out_of_date),
            "percentOutOfDate": None if r.percent_out_of_date is None else round(r.percent_out_of_date, 6),
            "meanOutOfDateDays": None if r.mean_out_of_date_days is None else round(r.mean_out_of_date_days, 6),
        }


def lag_of_latest(
    store: Store,
    package: str,
    as_of: datetime | None = None,
    at_publish: bool = True,
) -> PackageLag:
    """Measure lag of a package's latest release (as of ``as_of`` if given).

    By default the release is resolved at its own publish time; with
    ``at_publish=False`` it is resolved at ``as_of``.
    """
    history = store.history(package) if as_of is None else store.history_as_of(package, as_of)
    rec = history.latest_release()
    if rec is None:
        raise UnknownPackage(package)
    t_p = rec.published_at if at_publish or as_of is None else as_of
    graph = resolve_package(package, t_p, store, rec.version)
    return PackageLag(package, rec.version, t_p, compute_lag(graph, store))


# -- update flows --------------------------------------------------------------


class FlowCategory(str, enum.Enum):
    INSTANT = "InstantNoIntervention"
    DELAYED_INTERVENTION = "DelayedWithIntervention"
    DELAYED_MIDDLE_FIX = "DelayedMiddleFix"
    DELETED = "DeletedDependency"
    # not one of the four observed flow types; flagged for the caller
    CENSORED = "Censored"
    UNATTRIBUTED = "Unattributed"


CORE_CATEGORIES = (
    FlowCategory.INSTANT,
    FlowCategory.DELAYED_INTERVENTION,
    FlowCategory.DELAYED_MIDDLE_FIX,
    FlowCategory.DELETED,
)


class PreconditionViolated(ValueError):
    pass


@dataclass(frozen=True)
class FlowOutcome:
    update: Update
    downstream: str
    category: FlowCategory
    days_to_unblock: int | None = None

    def to_json(self) -> dict:
        return {
            "package": self.update.package,
            "from": str(self.update.from_version),
            "to": str(self.update.to_version),
            "increment": self.update.increment.value,
            "toAt": format_timestamp(self.update.to_at),
            "downstream": self.downstream,
            "category": self.category.value,
            "daysToUnblock": self.days_to_unblock,
        }


# (downstream name, downstream version, as_of) -> graph rooted at that version
Driver = Callable[[str, Version, datetime], ResolvedGraph]


def flat_driver(store: Store) -> Driver:
    def drive(name: str, version: Version, as_of: datetime) -> ResolvedGraph:
        return resolve_package(name, as_of, store, version)

    return drive


def _published_between(store: Store, name: str, start: datetime, end: datetime) -> bool:
    try:
        h = store.history(name)
    except UnknownPackage:
        return False
    return any(start < r.published_at <= end for r in h.records)


def classify_flow(
    update: Update,
    downstream: str,
    store: Store,
    driver: Driver | None = None,
    horizon_days: int = 90,
    frozen: bool = False,
) -> FlowOutcome:
    """Follow one upstream update into one downstream package day by day.

    The downstream is first resolved just before ``update.to_at`` and must
    contain ``update.from_version`` there. It is then re-resolved at
    ``to_at + k days`` for k = 0..horizon_days until the old version is gone.
    With ``frozen`` the downstream version observed before the update is kept
    instead of tracking its newest release.
    """
    driver = driver or flat_driver(store)
    pkg = update.package
    before = update.to_at - timedelta(milliseconds=1)
    pre = store.history_as_of(downstream, before).latest_release()
    if pre is None:
        raise PreconditionViolated(f"{downstream} has no release before {format_timestamp(update.to_at)}")
    try:
        g0 = driver(downstream, pre.version, before)
    except (ResolutionFailed, UnknownPackage) as exc:
        raise PreconditionViolated(f"{downstream} not resolvable before update: {exc}") from exc
    if update.from_version not in g0.versions_of(pkg):
        raise PreconditionViolated(f"{downstream}@{pre.version} does not use {pkg}@{update.from_version}")
    path_before = g0.paths_to(pkg)

    for k in range(horizon_days + 1):
        t = update.to_at + k * DAY
        if frozen:
            version = pre.version
        else:
            version = store.history_as_of(downstream, t).latest_release().version
        g = driver(downstream, version, t)
        versions = g.versions_of(pkg)
        if not versions:
            return FlowOutcome(update, downstream, FlowCategory.DELETED, k)
        if update.from_version in versions or max(versions) < update.to_version:
            continue
        if k == 0:
            return FlowOutcome(update, downstream, FlowCategory.INSTANT, None)
        if _published_between(store, downstream, update.to_at, t):
            return FlowOutcome(update, downstream, FlowCategory.DELAYED_INTERVENTION, k)
        middle = (path_before | g.paths_to(pkg)) - {downstream, pkg}
        if any(_published_between(store, m, update.to_at, t) for m in sorted(middle)):
            return FlowOutcome(update, downstream, FlowCategory.DELAYED_MIDDLE_FIX, k)
        return FlowOutcome(update, downstream, FlowCategory.UNATTRIBUTED, k)
    return FlowOutcome(update, downstream, FlowCategory.CENSORED, None)


def downstream_candidates(store: Store, update: Update) -> list[str]:
    """Packages whose latest release just before the update depends directly on its package."""
    before = update.to_at - timedelta(milliseconds=1)
    out = []
    for name in store.package_names():
        if name == update.package:
            continue
        rec = store.history_as_of(name, before).latest_release()
        if rec is not None and update.package in rec.dependencies:
            out.append(name)
    return out


def sample_flows(
    store: Store,
    updates: Sequence[Update],
    per_update: int = 50,
    seed: int = 0,
    horizon_days: int = 90,
    driver: Driver | None = None,
    frozen: bool = False,
) -> tuple[list[FlowOutcome], int]:
    """Run the flow experiment; returns outcomes and the number of skipped pairs.

    Up to ``per_update`` downstream candidates are drawn per update (seeded);
    candidates failing the up-to-date precondition or failing to resolve are
    skipped.
    """
    rng = random.Random(seed)
    outcomes, skipped = [], 0
    for u in updates:
        cands = downstream_candidates(store, u)
        rng.shuffle(cands)
        taken = 0
        for name in cands:
            if taken >= per_update:
                break
            try:
                outcomes.append(classify_flow(u, name, store, driver, horizon_days, frozen))
                taken += 1
            except (PreconditionViolated, ResolutionFailed, UnknownPackage):
                skipped += 1
    return outcomes, skipped


def flow_summary(outcomes: Iterable[FlowOutcome]) -> dict[str, dict]:
    """Counts and shares per category, plus the increment mix of each category."""
    by_cat: dict[FlowCategory, Counter] = {c: Counter() for c in FlowCategory}
    for o in outcomes:
        by_cat[o.category][o.update.increment] += 1
    total = sum(sum(c.values()) for c in by_cat.values())
    out = {}
    for cat in FlowCategory:
        n = sum(by_cat[cat].values())
        out[cat.value] = {
            "count": n,
            "percent": 100.0 * n / total if total else 0.0,
            **{f"{t.value}Percent": (100.0 * by_cat[cat][t] / n if n else 0.0) for t in IncrementType},
        }
    return out


def ecdf(values: Iterable[float]) -> list[tuple[float, float]]:
    """Empirical CDF as (x, fraction of values <= x) at each distinct x."""
    xs = sorted(values)
    n = len(xs)
    out = []
    for i, x in enumerate(xs):
        if i + 1 < n and xs[i + 1] == x:
            continue
        out.append((x, (i + 1) / n))
    return out
