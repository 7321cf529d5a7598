"""Seed-pinned behaviour of exhaustive selection on noise and sparse data.

    python3 scripts/calibrate_selection.py --seeds 50
"""

import argparse
import time

import numpy as np

from sparsemnl import MarginConfig, PenaltyConfig, select_model
from sparsemnl.bench import ScenarioConfig, generate_scenario
from sparsemnl.mnl_core import FeatureGenerator


def noise_trial(seed, d=6, n=500, L=3):
    rng = np.random.default_rng(seed)
    X = FeatureGenerator(d).sample(n, rng)
    y = rng.integers(1, L + 1, size=n)
    res = select_model(X, y, PenaltyConfig(L, d), MarginConfig())
    return res.chosen.size == 0


def support_trial(seed, d=10, d0=2, n=2000, L=3):
    sc = generate_scenario(ScenarioConfig(d=d, d0=d0, L=L, n=n, seed=seed))
    res = select_model(sc.X, sc.y, PenaltyConfig(L, d), MarginConfig())
    return set(sc.support) <= set(res.chosen.features)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=50)
    args = ap.parse_args()
    t0 = time.perf_counter()
    empty = sum(noise_trial(s) for s in range(args.seeds))
    print(f"noise labels, d=6: empty model chosen in {empty}/{args.seeds}", flush=True)
    cover = sum(support_trial(s) for s in range(args.seeds))
    print(f"d0=2 support, d=10, n=2000: true support covered in {cover}/{args.seeds}")
    print(f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
