"""Disagreement against excess risk on power-margin families.

For threshold rules ``eta_t(x) = 1 + (x <= t)`` on the one-feature binary
model, prints ``P(eta_t != eta*)`` next to ``E(eta_t)^(alpha / (alpha + 1))``.
Under a margin exponent ``alpha`` the ratio should stay bounded as ``t -> 0``.
Record only; nothing is asserted.

    python3 scripts/low_noise_check.py --n-mc 200000
"""

import argparse

import numpy as np

from sparsemnl.risk_lab import PowerMarginGenerator, disagreement, excess_risk


def threshold_rule(t):
    return lambda X: np.where(X[:, 0] > t, 1, 2)


def table(alpha, shifts, n_mc, seed=0):
    gen = PowerMarginGenerator(alpha=alpha)
    B = gen.coefficients
    rows = []
    for t in shifts:
        rule = threshold_rule(t)
        e = excess_risk(rule, B, gen, n_mc, seed).value
        dis = disagreement(rule, B, gen, n_mc, seed)
        ratio = dis / e ** (alpha / (alpha + 1)) if e > 0 else float("nan")
        rows.append((t, e, dis, ratio))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-mc", type=int, default=200_000)
    ap.add_argument("--alphas", default="0.5,1,2")
    args = ap.parse_args()
    shifts = np.geomspace(0.01, 0.5, 8)
    for alpha in map(float, args.alphas.split(",")):
        print(f"alpha = {alpha:g}")
        print(f"{'t':>8} {'excess':>10} {'disagree':>10} {'ratio':>8}")
        for t, e, dis, ratio in table(alpha, shifts, args.n_mc):
            print(f"{t:8.4f} {e:10.3e} {dis:10.3e} {ratio:8.3f}")


if __name__ == "__main__":
    main()
