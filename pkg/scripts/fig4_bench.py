"""Sequential vs parallel mining times over transaction length and support (CSV to stdout or --out)."""

import argparse
import sys

from rulevad.bench import bench_mining, rows_to_csv
from rulevad.rulemine import default_workers


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lengths", default="10,20,30,40,50")
    ap.add_argument("--support-pcts", default="30,40,50,60,70")
    ap.add_argument("--db-size", type=int, default=100_000)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--repeats", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()
    rows = bench_mining([int(x) for x in args.lengths.split(",")], [float(x) for x in args.support_pcts.split(",")],
                        args.db_size, args.workers, args.seed, repeats=args.repeats)
    text = rows_to_csv(rows)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
