"""Synthetic scenarios, experiment runs, sweeps and rate reports."""

from __future__ import annotations

import csv
import enum
import io
import math
import struct
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .mnl_core import (
    CoeffMatrix,
    FeatureGenerator,
    MarginConfig,
    check_assumption_a,
    sample_dataset,
)
from .risk_lab import RiskEstimate, bayes_risk, excess_risk, rate_fit
from .slope_opt import SolverOptions, fit_group_lasso, fit_group_slope, lambda_equal, lambda_variable
from .subset_select import PenaltyConfig, select_model

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the splitmix64 finalizer on a 64-bit integer."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def value_key(v) -> int:
    """64-bit key of a parameter value: the IEEE-754 bits of ``float(v)``."""
    return struct.unpack("<Q", struct.pack("<d", float(v)))[0]


def mix_seed(*parts: int) -> int:
    """Order-sensitive combination of integers into a 63-bit seed."""
    h = 0
    for p in parts:
        h = splitmix64(h ^ splitmix64(int(p) & _MASK))
    return h >> 1


class Method(str, enum.Enum):
    EXHAUSTIVE = "Exhaustive"
    GROUP_LASSO = "GroupLasso"
    GROUP_SLOPE = "GroupSlope"


class LambdaKind(str, enum.Enum):
    EQUAL = "Equal"
    VARIABLE = "Variable"


class ScenarioError(RuntimeError):
    """Scenario generation could not satisfy the margin assumption."""


@dataclass(frozen=True)
class ScenarioConfig:
    d: int = 30
    d0: int = 3
    L: int = 3
    n: int = 1000
    delta: float = 0.01
    generator: str = "uniform"
    b_scale: float = 1.0
    seed: int = 0
    method: Method = Method.GROUP_SLOPE
    lambda_kind: LambdaKind = LambdaKind.VARIABLE
    c0_tune: float = 2.0
    c1: float = 2.0
    c2: float = 2.0
    n_mc: int = 20000
    problem_seed: int | None = None
    max_size: int | None = None
    tol: float = 1e-6
    max_iter: int = 20000

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "lambda_kind", LambdaKind(self.lambda_kind))
        for name in ("d", "L", "n", "n_mc", "max_iter"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.L < 2:
            raise ValueError("L must be >= 2")
        if not 0 <= self.d0 <= self.d:
            raise ValueError("need 0 <= d0 <= d")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if self.b_scale < 0:
            raise ValueError("b_scale must be nonnegative")
        if self.generator not in ("uniform", "gaussian", "ball"):
            raise ValueError(f"unknown generator {self.generator!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.value
        out["lambda_kind"] = self.lambda_kind.value
        return out


@dataclass(frozen=True)
class Scenario:
    B_true: CoeffMatrix
    X: np.ndarray
    y: np.ndarray
    support: tuple[int, ...]
    generator: FeatureGenerator
    shrink: float = 1.0


def generate_scenario(cfg: ScenarioConfig, max_retries: int = 20) -> Scenario:
    """Draw a row-sparse ``B_true`` and a sample from it.

    Nonzero rows sit on a seed-chosen support with entries ``+-b_scale`` in
    the first ``L-1`` columns (last column zero). For bounded generators
    ``B_true`` is shrunk until the margin holds on the whole support; for the
    Gaussian generator it is shrunk against fresh samples until the sample
    check passes, giving up after ``max_retries``.
    """
    problem_seed = cfg.seed if cfg.problem_seed is None else cfg.problem_seed
    rng = np.random.default_rng(problem_seed)
    support = np.sort(rng.choice(cfg.d, size=cfg.d0, replace=False)) + 1
    B = np.zeros((cfg.d, cfg.L))
    if cfg.d0:
        B[support - 1, : cfg.L - 1] = rng.choice([-1.0, 1.0], size=(cfg.d0, cfg.L - 1)) * cfg.b_scale
    gen = FeatureGenerator(cfg.d, cfg.generator)
    margin = MarginConfig(cfg.delta)
    c0 = margin.c0
    shrink = 1.0

    bound = max(gen.sup_abs_score(B[:, l]) for l in range(cfg.L))
    if math.isfinite(bound):
        if bound >= c0:
            shrink = 0.99 * c0 / bound
            B *= shrink
        X, y = sample_dataset(B, gen, cfg.n, cfg.seed)
    else:
        for attempt in range(max_retries + 1):
            X, y = sample_dataset(B, gen, cfg.n, mix_seed(cfg.seed, attempt) if attempt else cfg.seed)
            report = check_assumption_a(B, X, margin)
            if report.holds:
                break
            factor = 0.99 * c0 / report.worst_margin
            B *= factor
            shrink *= factor
        else:
            raise ScenarioError(f"margin check still failing after {max_retries} rescalings")

    if not check_assumption_a(B, X, margin).holds:
        raise ScenarioError("generated scenario violates the margin assumption")
    return Scenario(CoeffMatrix(B), X, y, tuple(int(j) for j in support), gen, shrink)


@dataclass(frozen=True)
class ExperimentRecord:
    config: ScenarioConfig
    excess_risk: RiskEstimate | None
    bayes_risk: RiskEstimate | None
    true_positive: int = 0
    false_positive: int = 0
    selected_size: int = 0
    iterations: int = 0
    kkt_residual: float = math.nan
    converged: bool = False
    status: str = "ok"
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


CONFIG_FIELDS = [f.name for f in fields(ScenarioConfig)]
RESULT_FIELDS = [
    "excess_risk", "excess_se", "bayes_risk", "bayes_se", "n_mc_eval", "risk_method",
    "true_positive", "false_positive", "selected_size", "iterations", "kkt_residual",
    "converged", "status", "wall_time",
]
CSV_HEADER = CONFIG_FIELDS + RESULT_FIELDS


def _evaluation_seed(cfg: ScenarioConfig) -> int:
    return mix_seed(cfg.seed, 0xE7A1)


def fit_scenario(cfg: ScenarioConfig, sc: Scenario):
    """Fit the configured method; returns ``(B_hat, selected, iterations, kkt, converged)``."""
    X, y = sc.X, sc.y
    n, d = X.shape
    if cfg.method is Method.EXHAUSTIVE:
        res = select_model(X, y, PenaltyConfig(cfg.L, d, cfg.c1, cfg.c2), MarginConfig(cfg.delta),
                           max_size=cfg.max_size)
        fit = res.fit
        return res.coefficients.B, res.chosen.features, fit.iterations, fit.residual, fit.converged
    opts = SolverOptions(tol_kkt=cfg.tol, max_iter=cfg.max_iter)
    make = lambda_equal if cfg.lambda_kind is LambdaKind.EQUAL else lambda_variable
    lam = make(d, cfg.L, n, cfg.c0_tune)
    if cfg.method is Method.GROUP_LASSO:
        fit = fit_group_lasso(X, y, float(lam.values[0]), opts, L=cfg.L)
    else:
        fit = fit_group_slope(X, y, lam, opts, L=cfg.L)
    return fit.B, fit.support, fit.iterations, fit.kkt_residual, fit.converged


def run_experiment(cfg: ScenarioConfig, timing: bool = False) -> ExperimentRecord:
    """Generate, fit and evaluate one configuration.

    Failures are captured in ``status`` rather than raised. ``wall_time`` is
    recorded only with ``timing=True`` so that default output is reproducible.
    """
    t0 = time.perf_counter()
    try:
        sc = generate_scenario(cfg)
        B_hat, selected, iters, kkt, converged = fit_scenario(cfg, sc)
        classifier = plugin_classifier_from(B_hat)
        seed = _evaluation_seed(cfg)
        er = excess_risk(classifier, sc.B_true, sc.generator, cfg.n_mc, seed)
        br = bayes_risk(sc.B_true, sc.generator, cfg.n_mc, seed)
        truth = set(sc.support)
        tp = len(truth.intersection(selected))
        record = ExperimentRecord(cfg, er, br, tp, len(selected) - tp, len(selected), int(iters),
                                  float(kkt), bool(converged), "ok")
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop a sweep
        record = ExperimentRecord(cfg, None, None, status=f"error: {type(exc).__name__}: {exc}")
    if timing:
        record = replace(record, wall_time=time.perf_counter() - t0)
    return record


def plugin_classifier_from(B_hat: np.ndarray):
    B_hat = np.array(B_hat, dtype=float)

    def classify(X):
        return np.argmax(np.asarray(X, dtype=float) @ B_hat, axis=-1) + 1

    return classify


SWEEP_PARAMS = ("n", "d", "d0", "L", "c0_tune")


def sweep_configs(base: ScenarioConfig, param: str, values: Sequence, seeds: Sequence[int]):
    """Cell configurations in (value, seed) order.

    The problem seed depends only on ``(base.seed, replicate)`` so that a sweep
    over ``n`` or ``c0_tune`` keeps ``B_true`` fixed per replicate; the data
    seed also mixes in the parameter value.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    if len(seeds) == 0:
        raise ValueError("sweep needs at least one seed")
    if len(values) == 0:
        raise ValueError("sweep needs at least one value")
    cast = float if param == "c0_tune" else int
    cells = []
    for v in values:
        for s in seeds:
            cells.append(replace(
                base,
                **{param: cast(v)},
                seed=mix_seed(base.seed, value_key(cast(v)), int(s)),
                problem_seed=mix_seed(base.seed, int(s)),
            ))
    return cells


def sweep(base: ScenarioConfig, param: str, values: Sequence, seeds: Sequence[int], jobs: int = 1,
          timing: bool = False) -> list[ExperimentRecord]:
    """Run every (value, seed) cell; results come back in (value, seed) order."""
    cells = sweep_configs(base, param, values, seeds)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_experiment, cells, [timing] * len(cells)))
    return [run_experiment(c, timing) for c in cells]


# --------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def record_row(r: ExperimentRecord) -> list[str]:
    cfg = r.config.to_dict()
    er, br = r.excess_risk, r.bayes_risk
    vals = [cfg[k] for k in CONFIG_FIELDS] + [
        er.value if er else None, er.std_error if er else None,
        br.value if br else None, br.std_error if br else None,
        er.n_mc if er else None, er.method.value if er else None,
        r.true_positive, r.false_positive, r.selected_size, r.iterations, float(r.kkt_residual),
        r.converged, r.status, float(r.wall_time),
    ]
    return [_fmt(v) for v in vals]


def records_to_csv(records: Iterable[ExperimentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(record_row(r))
    return buf.getvalue()


_INT_CFG = {"d", "d0", "L", "n", "seed", "n_mc", "problem_seed", "max_size", "max_iter"}


def _parse_cfg_value(name, text):
    if text == "":
        return None
    if name in _INT_CFG:
        return int(text)
    if name in ("generator", "method", "lambda_kind"):
        return text
    return float(text)


def records_from_csv(text: str) -> list[ExperimentRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError("unexpected results CSV header")
    out = []
    for row in rows[1:]:
        data = dict(zip(CSV_HEADER, row))
        cfg = ScenarioConfig(**{k: _parse_cfg_value(k, data[k]) for k in CONFIG_FIELDS})
        er = br = None
        if data["excess_risk"] != "":
            n_mc, method = int(data["n_mc_eval"]), data["risk_method"]
            er = RiskEstimate(float(data["excess_risk"]), float(data["excess_se"]), n_mc, method)
            br = RiskEstimate(float(data["bayes_risk"]), float(data["bayes_se"]), n_mc, method)
        out.append(ExperimentRecord(
            cfg, er, br,
            int(data["true_positive"]), int(data["false_positive"]), int(data["selected_size"]),
            int(data["iterations"]), float(data["kkt_residual"]), data["converged"] == "true",
            data["status"], float(data["wall_time"]),
        ))
    return out


# --------------------------------------------------------------------------
# rate reports


@dataclass(frozen=True)
class GroupRate:
    key: tuple
    slope: float
    intercept: float
    r2: float
    points: tuple[tuple[int, float, float, int], ...]  # (n, mean excess, std error, count)


@dataclass(frozen=True)
class RateReport:
    group_by: tuple[str, ...]
    groups: tuple[GroupRate, ...]
    excluded: tuple[tuple, ...] = field(default=())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.group_by) + ["slope", "intercept", "r2", "n_points"])
        for g in self.groups:
            w.writerow([_fmt(k) for k in g.key] + [repr(g.slope), repr(g.intercept), repr(g.r2),
                                                   len(g.points)])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"rate fit of mean excess risk on n, grouped by {', '.join(self.group_by) or '(all)'}"]
        for g in self.groups:
            key = ", ".join(f"{k}={_fmt(v)}" for k, v in zip(self.group_by, g.key))
            lines.append(f"[{key}] slope={g.slope:.4f} intercept={g.intercept:.4f} r2={g.r2:.4f}")
            for n, m, se, c in g.points:
                lines.append(f"    n={n:<8d} mean_excess={m:.6g} se={se:.3g} runs={c}")
        for key in self.excluded:
            lines.append(f"excluded group {key}: fewer than 3 distinct n values")
        return "\n".join(lines) + "\n"


def mean_excess_by(records: Sequence[ExperimentRecord], param: str):
    """``{value: (mean, standard error of the mean, count)}`` over successful records."""
    acc: dict = {}
    for r in records:
        if r.ok and r.excess_risk is not None:
            acc.setdefault(getattr(r.config, param), []).append(r.excess_risk.value)
    out = {}
    for v, xs in sorted(acc.items()):
        a = np.array(xs)
        se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
        out[v] = (float(a.mean()), se, int(a.size))
    return out


def rate_report(records: Sequence[ExperimentRecord], group_by: Sequence[str] = ("method", "lambda_kind")
                ) -> RateReport:
    """Fit ``ln(mean excess risk)`` on ``ln(n)`` separately for each group."""
    group_by = tuple(group_by)
    groups: dict = {}
    for r in records:
        key = tuple(getattr(r.config, g) for g in group_by)
        groups.setdefault(key, []).append(r)
    fitted, excluded = [], []
    for key in sorted(groups, key=lambda k: tuple(_fmt(v) for v in k)):
        stats = mean_excess_by(groups[key], "n")
        if len(stats) < 3:
            warnings.warn(f"rate_report: group {key} has fewer than 3 distinct n values; excluded",
                          stacklevel=2)
            excluded.append(key)
            continue
        fit = rate_fit([(n, s[0]) for n, s in stats.items()])
        pts = tuple((int(n), s[0], s[1], s[2]) for n, s in stats.items())
        fitted.append(GroupRate(key, fit.slope, fit.intercept, fit.r2, pts))
    if not fitted:
        raise ValueError("no group has at least 3 distinct n values")
    return RateReport(group_by, tuple(fitted), tuple(excluded))
