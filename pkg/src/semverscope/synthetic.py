"""Seeded synthetic registry corpora for scale and determinism checks."""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone
from typing import Iterator

from .timeutil import format_timestamp, parse_timestamp

_EPOCH = datetime(2012, 1, 1, tzinfo=timezone.utc)
_CONSTRAINT_FORMS = [
    ("^{v}", 55),
    ("~{v}", 15),
    ("{v}", 10),
    ("={v}", 2),
    (">={v}", 5),
    ("*", 3),
    ("^{v} || ^{n}.0.0", 3),
    ("{M}.{m}.x", 3),
    (">={v} <{n}.0.0", 2),
    ("latest", 1),
    ("git+https://example.invalid/{name}.git", 1),
]


def _pick_form(rng: random.Random) -> str:
    forms, weights = zip(*_CONSTRAINT_FORMS)
    return rng.choices(forms, weights)[0]


def synthetic_packuments(
    n_versions: int = 100_000,
    seed: int = 0,
    mean_versions: int = 20,
) -> Iterator[dict]:
    """Yield packuments totalling exactly ``n_versions`` versions.

    Versions are mostly published in order, with occasional maintenance
    releases on an older major and a few out-of-order packages (which the
    miner must reject). Dependencies point at earlier packages only.
    """
    rng = random.Random(seed)
    made = 0
    idx = 0
    released: list[tuple[str, list[tuple[str, datetime]]]] = []
    while made < n_versions:
        name = f"pkg-{idx:05d}"
        idx += 1
        count = min(n_versions - made, max(1, int(rng.expovariate(1 / mean_versions))))
        made += count
        t = _EPOCH + timedelta(seconds=rng.randrange(0, 8 * 365 * 86400))
        majors: dict[int, list[int]] = {rng.choice([0, 1]): [0, 0]}
        current = max(majors)
        versions, times = {}, {"created": format_timestamp(t)}
        shuffled = rng.random() < 0.03
        for _ in range(count):
            roll = rng.random()
            if roll < 0.08 and len(majors) > 1:
                target = rng.choice(sorted(majors)[:-1])  # backport to an older line
            elif roll < 0.14:
                current += 1
                majors[current] = [0, -1]
                target = current
            else:
                target = current
            mm = majors[target]
            if rng.random() < 0.25:
                mm[0] += 1
                mm[1] = 0
            else:
                mm[1] += 1
            v = f"{target}.{mm[0]}.{mm[1]}"
            if rng.random() < 0.03:
                v += f"-beta.{rng.randrange(5)}"
            if v in versions:
                continue
            deps = {}
            for _ in range(rng.randrange(0, 6) if released else 0):
                dep_name, dep_versions = released[rng.randrange(len(released))]
                # only versions that already exist, so constraints resolve at publish time
                live = [dv for dv, dt in dep_versions if dt <= t]
                if not live:
                    continue
                dv = rng.choice(live[-5:]).split("-")[0]
                M, m, _p = dv.split(".")
                deps[dep_name] = _pick_form(rng).format(v=dv, M=M, m=m, n=int(M) + 1, name=dep_name)
            versions[v] = {"name": name, "version": v, "dependencies": deps,
                           "dist": {"tarball": f"https://registry.invalid/{name}/-/{name}-{v}.tgz"}}
            t += timedelta(seconds=rng.randrange(60, max(120, 3 * 365 * 86400 // count)))
            times[v] = format_timestamp(t)
        if shuffled and len(versions) > 2:
            keys = [k for k in versions]
            stamps = [times[k] for k in keys]
            rng.shuffle(stamps)
            times.update(zip(keys, stamps))
        made -= count - len(versions)
        times["modified"] = max(times[k] for k in versions) if versions else times["created"]
        releases = [k for k in versions if "-" not in k]
        tags = {"latest": releases[-1]} if releases else {}
        released.append((name, sorted(((k, parse_timestamp(times[k])) for k in versions), key=lambda kv: kv[1])))
        yield {"name": name, "dist-tags": tags, "versions": versions, "time": times}
