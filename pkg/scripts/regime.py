"""Mean excess risk against the number of classes at fixed n, d, d0.

The small/large class-count boundary sits at L = 2 + ln(d/d0).

    python3 scripts/regime.py --out runs/regime
"""

import argparse
import csv
import math
import time
from pathlib import Path

from sparsemnl.bench import ScenarioConfig, mean_excess_by, records_to_csv, sweep

LS = tuple(range(2, 13))


def run(seeds=range(20), jobs=1, **overrides):
    base = ScenarioConfig(d=30, d0=3, n=2000, **overrides)
    records = sweep(base, "L", LS, list(seeds), jobs=jobs)
    return records, mean_excess_by(records, "L")


def boundary(d, d0):
    return 2 + math.log(d / d0)


def violations(stats, start, k=2.0):
    """Consecutive pairs beyond ``start`` where the mean drops by more than k combined SE."""
    keys = [L for L in sorted(stats) if L > start]
    bad = []
    for a, b in zip(keys, keys[1:]):
        (ma, sa, _), (mb, sb, _) = stats[a], stats[b]
        if mb < ma - k * math.hypot(sa, sb):
            bad.append((a, b))
    return bad


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("runs/regime"))
    args = ap.parse_args()
    t0 = time.perf_counter()
    records, stats = run(range(args.seeds), args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "results.csv").write_text(records_to_csv(records))
    with open(args.out / "by_L.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "mean_excess", "se", "runs"])
        for L, (m, se, c) in stats.items():
            w.writerow([L, repr(m), repr(se), c])
    b = boundary(30, 3)
    for L, (m, se, c) in stats.items():
        print(f"L={L:<3d} mean_excess={m:.5f} se={se:.5f} runs={c}{'  *' if L > b else ''}")
    print(f"boundary {b:.2f}; drops beyond it: {violations(stats, b) or 'none'}; "
          f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
