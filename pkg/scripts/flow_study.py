"""Mine a corpus, sample dependency flows and summarize them.

    python scripts/flow_study.py --versions 5000 --per-update 5 --out-dir flow-study
"""

import argparse
import json
import random
from pathlib import Path

from semverscope.analysis import ecdf, flow_summary, sample_flows
from semverscope.miner import mine_updates
from semverscope.store import Store, iter_feed
from semverscope.synthetic import synthetic_packuments


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", help="NDJSON packuments; a synthetic corpus is generated when omitted")
    ap.add_argument("--versions", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--per-update", type=int, default=5)
    ap.add_argument("--max-updates", type=int, default=200)
    ap.add_argument("--horizon-days", type=int, default=90)
    ap.add_argument("--out-dir", default="flow-study")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs = iter_feed(args.corpus) if args.corpus else synthetic_packuments(args.versions, args.seed)
    with Store(out / "store") as store:
        store.ingest_changes(docs)
        updates = [u for h in store.histories() for u in mine_updates(h).updates]
        if len(updates) > args.max_updates:
            updates = random.Random(args.seed).sample(updates, args.max_updates)
        outcomes, skipped = sample_flows(store, updates, args.per_update, args.seed, args.horizon_days)

    with open(out / "flows.ndjson", "w", encoding="utf-8") as fh:
        for o in outcomes:
            fh.write(json.dumps(o.to_json(), sort_keys=True) + "\n")
    summary = flow_summary(outcomes)
    print(f"{len(updates)} updates, {len(outcomes)} flows, {skipped} pairs skipped")
    for cat, row in summary.items():
        print(f"{cat:28} {row['count']:6d} {row['percent']:6.1f}%")
    delays = [o.days_to_unblock for o in outcomes if o.days_to_unblock is not None]
    if delays:
        points = ecdf(delays)
        median = next(x for x, p in points if p >= 0.5)
        print(f"median days to unblock (delayed flows): {median}")


if __name__ == "__main__":
    main()
