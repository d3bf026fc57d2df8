"""Write a seeded synthetic packument corpus as NDJSON.

    python scripts/make_synthetic_corpus.py corpus.ndjson --versions 100000 --seed 0
"""

import argparse
import json

from semverscope.synthetic import synthetic_packuments


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--versions", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mean-versions", type=int, default=20, help="mean versions per package")
    args = ap.parse_args()

    packages = versions = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for doc in synthetic_packuments(args.versions, args.seed, args.mean_versions):
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")
            packages += 1
            versions += len(doc["versions"])
    print(f"wrote {packages} packages / {versions} versions to {args.out}")


if __name__ == "__main__":
    main()
