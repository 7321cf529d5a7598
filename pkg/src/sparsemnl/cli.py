"""``sparsemnl`` command line: gen | fit | eval | sweep | rate-fit.

Exit codes: 0 success, 1 configuration error, 2 guard violation (combinatorial
budget or margin assumption).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench
from .bench import ScenarioConfig, ScenarioError
from .io import read_coefficients, read_dataset, write_coefficients, write_dataset
from .mnl_core import FeatureGenerator, MarginConfig, check_assumption_a
from .risk_lab import bayes_risk, excess_risk
from .slope_opt import SolverOptions, fit_group_lasso, fit_group_slope, lambda_equal, lambda_variable
from .subset_select import BudgetExceededError, PenaltyConfig, select_model

EXIT_OK, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2


class ConfigError(ValueError):
    pass


# flag name -> (config field, type)
_OVERRIDES = {
    "d": ("d", int), "d0": ("d0", int), "L": ("L", int), "n": ("n", int),
    "delta": ("delta", float), "generator": ("generator", str), "b_scale": ("b_scale", float),
    "seed": ("seed", int), "method": ("method", str), "lambda_kind": ("lambda_kind", str),
    "c0_tune": ("c0_tune", float), "c1": ("c1", float), "c2": ("c2", float),
    "n_mc": ("n_mc", int), "max_size": ("max_size", int), "tol": ("tol", float),
    "max_iter": ("max_iter", int),
}

_METHOD_ALIASES = {"exhaustive": "Exhaustive", "lasso": "GroupLasso", "slope": "GroupSlope"}
_LAMBDA_ALIASES = {"equal": "Equal", "variable": "Variable"}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON file with ScenarioConfig fields")
    p.add_argument("--d", type=int)
    p.add_argument("--d0", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--generator", choices=["uniform", "gaussian", "ball"])
    p.add_argument("--b-scale", dest="b_scale", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--method", choices=sorted(_METHOD_ALIASES))
    p.add_argument("--lambda", dest="lambda_kind", choices=sorted(_LAMBDA_ALIASES))
    p.add_argument("--c0-tune", dest="c0_tune", type=float)
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--n-mc", dest="n_mc", type=int)
    p.add_argument("--max-size", dest="max_size", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)


def load_config(args) -> ScenarioConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for flag, (name, _) in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            data[name] = v
    if "method" in data:
        data["method"] = _METHOD_ALIASES.get(data["method"], data["method"])
    if "lambda_kind" in data:
        data["lambda_kind"] = _LAMBDA_ALIASES.get(data["lambda_kind"], data["lambda_kind"])
    try:
        return ScenarioConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_gen(args) -> int:
    cfg = load_config(args)
    sc = bench.generate_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(out / "data.csv", sc.X, sc.y)
    write_coefficients(out / "B_true.csv", sc.B_true)
    meta = {"config": cfg.to_dict(), "support": list(sc.support), "shrink": sc.shrink}
    _write(out / "scenario.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'data.csv'} ({cfg.n} x {cfg.d}), support {list(sc.support)}")
    return EXIT_OK


def cmd_fit(args) -> int:
    X, y = read_dataset(args.data)
    n, d = X.shape
    L = args.L or int(y.max())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    diag = {"method": args.method, "n": n, "d": d, "L": L}
    if args.method == "exhaustive":
        res = select_model(X, y, PenaltyConfig(L, d, args.c1, args.c2), MarginConfig(args.delta),
                           max_size=args.max_size)
        coeff = res.coefficients
        _write(out / "criterion.csv", res.criterion_csv())
        diag.update(chosen=list(res.chosen.features), iterations=res.fit.iterations,
                    residual=res.fit.residual, converged=res.fit.converged)
    else:
        make = lambda_equal if args.lambda_kind == "equal" else lambda_variable
        lam = make(d, L, n, args.c0_tune)
        opts = SolverOptions(tol_kkt=args.tol, max_iter=args.max_iter)
        if args.method == "lasso":
            fit = fit_group_lasso(X, y, float(lam.values[0]), opts, L=L)
        else:
            fit = fit_group_slope(X, y, lam, opts, L=L)
        coeff = fit.coefficients
        diag.update(support=list(fit.support), iterations=fit.iterations,
                    kkt_residual=fit.kkt_residual, converged=fit.converged, status=fit.status,
                    lambda_kind=args.lambda_kind, c0_tune=args.c0_tune)
        if args.check_margin:
            rep = check_assumption_a(coeff, X, MarginConfig(args.delta))
            diag.update(assumption_a_holds=rep.holds, worst_margin=rep.worst_margin)
    write_coefficients(out / "coef.csv", coeff)
    _write(out / "fit.json", json.dumps(diag, indent=2, sort_keys=True) + "\n")
    print(json.dumps(diag, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    B_hat = read_coefficients(args.coef)
    B_true = read_coefficients(args.truth)
    if B_hat.B.shape != B_true.B.shape:
        raise ConfigError("fitted and true coefficient shapes differ")
    gen = FeatureGenerator(B_true.d, args.generator)
    Bh = B_hat.B

    def classify(X):
        return np.argmax(X @ Bh, axis=1) + 1

    er = excess_risk(classify, B_true, gen, args.n_mc, args.seed)
    br = bayes_risk(B_true, gen, args.n_mc, args.seed)
    header = ["excess_risk", "excess_se", "bayes_risk", "bayes_se", "n_mc", "seed", "generator"]
    row = [repr(er.value), repr(er.std_error), repr(br.value), repr(br.std_error), args.n_mc,
           args.seed, args.generator]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerow(row)
    print(f"excess risk {er.value:.6g} (se {er.std_error:.3g}), Bayes risk {br.value:.6g}")
    return EXIT_OK


def _parse_seeds(text: str) -> list[int]:
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            seeds.extend(range(int(a), int(b) + 1))
        else:
            seeds.append(int(part))
    return seeds


def cmd_sweep(args) -> int:
    base = load_config(args)
    values = [v for v in args.values.split(",") if v.strip()]
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        raise ConfigError("--seeds selects no seeds")
    try:
        records = bench.sweep(base, args.param, values, seeds, jobs=args.jobs, timing=args.timing)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    _write(out / "results.csv", bench.records_to_csv(records))
    failed = sum(not r.ok for r in records)
    print(f"wrote {len(records)} records to {out / 'results.csv'} ({failed} failed)")
    return EXIT_OK


def cmd_rate_fit(args) -> int:
    records = bench.records_from_csv(Path(args.results).read_text())
    group_by = [g for g in args.group_by.split(",") if g]
    try:
        report = bench.rate_report(records, group_by)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    _write(out / "report.txt", report.to_text())
    _write(out / "rates.csv", report.to_csv())
    sys.stdout.write(report.to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsemnl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scenario")
    _add_config_flags(p)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit a classifier to a dataset CSV")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--method", choices=["exhaustive", "slope", "lasso"], default="slope")
    p.add_argument("--L", type=int, help="number of classes (default: max label)")
    p.add_argument("--c0-tune", dest="c0_tune", type=float, default=2.0)
    p.add_argument("--lambda", dest="lambda_kind", choices=["equal", "variable"], default="variable")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=20000)
    p.add_argument("--c1", type=float, default=2.0)
    p.add_argument("--c2", type=float, default=2.0)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--max-size", dest="max_size", type=int)
    p.add_argument("--check-margin", action="store_true", help="report Assumption A on the fit")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="excess risk of fitted coefficients against the truth")
    p.add_argument("--coef", required=True, type=Path)
    p.add_argument("--truth", required=True, type=Path)
    p.add_argument("--generator", choices=["uniform", "gaussian", "ball"], default="uniform")
    p.add_argument("--n-mc", dest="n_mc", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    _add_config_flags(p)
    p.add_argument("--param", required=True, choices=list(bench.SWEEP_PARAMS))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", default="0-19", help="e.g. 0-19 or 1,2,5")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="record wall time (breaks byte reproducibility)")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rate-fit", help="fit log-log rates to sweep results")
    p.add_argument("--results", required=True, type=Path)
    p.add_argument("--group-by", dest="group_by", default="method,lambda_kind")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_rate_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BudgetExceededError, ScenarioError) as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
