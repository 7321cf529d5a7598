"""Excess-risk rate over n for the group Slope classifier.

    python3 scripts/rate_check.py --out runs/rate
"""

import argparse
import time
from pathlib import Path

from sparsemnl.bench import LambdaKind, Method, ScenarioConfig, rate_report, records_to_csv, sweep

NS = (250, 500, 1000, 2000, 4000)


def run(seeds=range(20), jobs=1, **overrides):
    base = ScenarioConfig(d=30, d0=3, L=3, method=Method.GROUP_SLOPE, lambda_kind=LambdaKind.VARIABLE,
                          **overrides)
    return sweep(base, "n", NS, list(seeds), jobs=jobs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--c0-tune", type=float, default=2.0)
    ap.add_argument("--generator", default="uniform")
    ap.add_argument("--out", type=Path, default=Path("runs/rate"))
    args = ap.parse_args()
    t0 = time.perf_counter()
    records = run(range(args.seeds), args.jobs, c0_tune=args.c0_tune, generator=args.generator)
    report = rate_report(records)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "results.csv").write_text(records_to_csv(records))
    (args.out / "report.txt").write_text(report.to_text())
    (args.out / "rates.csv").write_text(report.to_csv())
    print(report.to_text(), end="")
    print(f"{len(records)} cells, {sum(not r.ok for r in records)} failed, {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
