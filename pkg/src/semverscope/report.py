"""CSV summary tables and SVG plots for the analysis outputs."""

from __future__ import annotations

from collections import Counter, defaultdict

from .analysis import FlowCategory, constraint_usage_by_year, ecdf
from .diff import ChangeClass, content_distribution
from .miner import MiningReport, SecurityEffect, Update, update_type_distribution
from .semver import Category, IncrementType


def constraints_table(store):
    table = constraint_usage_by_year(store)
    header = ["year"] + [c.value for c in Category]
    return header, [[y] + [round(table[y][c], 6) for c in Category] for y in sorted(table)]


def update_types_table(rows: list[dict]):
    by_pkg: dict[str, list[Update]] = defaultdict(list)
    for d in rows:
        u = Update.from_json(d)
        by_pkg[u.package].append(u)
    reports = [MiningReport(p, tuple(us)) for p, us in sorted(by_pkg.items())]
    out = []
    for seg in (SecurityEffect.NONE, SecurityEffect.INTRODUCES, SecurityEffect.PATCHES):
        for r in update_type_distribution(reports, seg):
            f = r.fractions
            out.append([seg.value, r.package, r.total] + [round(100 * f[t], 6) for t in IncrementType])
    return ["segment", "package", "updates", "bug", "minor", "major"], out


def lag_table(rows: list[dict]):
    out = []
    pct = [d["percentOutOfDate"] for d in rows if d.get("percentOutOfDate") is not None]
    days = [d["meanOutOfDateDays"] for d in rows if d.get("meanOutOfDateDays") is not None]
    for metric, values in (("percentOutOfDate", pct), ("meanOutOfDateDays", days)):
        for x, y in ecdf(values):
            out.append([metric, round(x, 6), round(y, 6)])
    return ["metric", "x", "ecdf"], out


def flow_table(rows: list[dict]):
    counts: dict[str, Counter] = {c.value: Counter() for c in FlowCategory}
    for d in rows:
        counts[d["category"]][d["increment"]] += 1
    total = sum(sum(c.values()) for c in counts.values())
    out = []
    for cat, c in counts.items():
        n = sum(c.values())
        shares = [round(100 * c[t.value] / n, 6) if n else 0.0 for t in IncrementType]
        out.append([cat, n, round(100 * n / total, 6) if total else 0.0] + shares)
    return ["category", "count", "percent", "bugPercent", "minorPercent", "majorPercent"], out


def delayed_days_table(rows: list[dict]):
    blocked = {FlowCategory.DELAYED_INTERVENTION.value, FlowCategory.DELAYED_MIDDLE_FIX.value, FlowCategory.DELETED.value}
    days = [d["daysToUnblock"] for d in rows if d["category"] in blocked and d.get("daysToUnblock") is not None]
    return ["days", "ecdf"], [[x, round(y, 6)] for x, y in ecdf(days)]


def contents_table(rows: list[dict]):
    triples = [(d["package"], d["increment"], d["class"]) for d in rows if d.get("package") and d.get("increment")]
    out = []
    for r in content_distribution(triples):
        out.append([r.package, r.increment.value, r.total] + [round(100 * r.fractions[c], 6) for c in ChangeClass])
    return ["package", "increment", "updates"] + [c.value for c in ChangeClass], out


TABLES = {
    "update-types": update_types_table,
    "lag": lag_table,
    "flow": flow_table,
    "delayed-days": delayed_days_table,
    "contents": contents_table,
}


def render_svg(kind: str, header: list[str], rows: list[list], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "semverscope"
    fig, ax = plt.subplots(figsize=(6, 4))
    if kind == "constraints":
        years = [r[0] for r in rows]
        for i, cat in enumerate(header[1:], start=1):
            ax.plot(years, [r[i] for r in rows], marker="o", label=cat)
        ax.set_xlabel("year")
        ax.set_ylabel("% of constraints")
        ax.legend(fontsize="small")
    elif kind in ("lag", "delayed-days"):
        series: dict[str, list] = defaultdict(list)
        for r in rows:
            key, x, y = (r[0], r[1], r[2]) if kind == "lag" else ("daysToUnblock", r[0], r[1])
            series[key].append((x, y))
        for key, pts in series.items():
            ax.step([p[0] for p in pts], [p[1] for p in pts], where="post", label=key)
        ax.set_ylabel("ECDF")
        ax.legend(fontsize="small")
    elif kind == "flow":
        ax.bar([r[0] for r in rows], [r[2] for r in rows])
        ax.set_ylabel("% of flows")
        ax.tick_params(axis="x", labelrotation=30, labelsize="small")
    elif kind == "update-types":
        groups = defaultdict(list)
        for seg, _pkg, _n, *shares in rows:
            for t, s in zip(IncrementType, shares):
                groups[f"{seg}:{t.value}"].append(s)
        labels = sorted(groups)
        ax.boxplot([groups[k] for k in labels])
        ax.set_xticks(range(1, len(labels) + 1), labels, rotation=45, fontsize="x-small")
        ax.set_ylabel("% of package's updates")
    elif kind == "contents":
        groups = defaultdict(list)
        for _pkg, inc, _n, *shares in rows:
            for c, s in zip(ChangeClass, shares):
                groups[f"{inc}:{c.value}"].append(s)
        labels = sorted(groups)
        ax.boxplot([groups[k] for k in labels])
        ax.set_xticks(range(1, len(labels) + 1), labels, rotation=45, fontsize="x-small")
        ax.set_ylabel("% of package's updates")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
