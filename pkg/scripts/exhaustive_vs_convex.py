"""Exhaustive penalized selection against group Slope on small problems.

Counts the seeds where the exhaustive plug-in's excess risk is at most the
group Slope excess risk plus three combined standard errors.

    python3 scripts/exhaustive_vs_convex.py --seeds 50
"""

import argparse
import math
import time
from dataclasses import replace

from sparsemnl.bench import Method, ScenarioConfig, run_experiment


def compare(seed, **overrides):
    base = ScenarioConfig(d=10, d0=2, L=3, n=2000, seed=seed, **overrides)
    ex = run_experiment(replace(base, method=Method.EXHAUSTIVE))
    sl = run_experiment(replace(base, method=Method.GROUP_SLOPE))
    if not (ex.ok and sl.ok):
        return ex, sl, False
    e, s = ex.excess_risk, sl.excess_risk
    return ex, sl, e.value <= s.value + 3 * math.hypot(e.std_error, s.std_error)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=50)
    args = ap.parse_args()
    t0 = time.perf_counter()
    wins = 0
    for s in range(args.seeds):
        ex, sl, ok = compare(s)
        wins += ok
        print(f"seed={s:<3d} exhaustive={ex.excess_risk.value:.5f} (size {ex.selected_size}) "
              f"slope={sl.excess_risk.value:.5f} (size {sl.selected_size}) {'ok' if ok else 'worse'}",
              flush=True)
    print(f"fraction within 3 SE: {wins}/{args.seeds} = {wins / args.seeds:.2f}; "
          f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
