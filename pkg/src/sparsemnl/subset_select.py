"""Complexity-penalized maximum likelihood feature selection.

Every candidate model ``M`` (a set of feature indices) gets the maximum
likelihood fit over coefficient matrices supported on ``M`` with last
column zero and column norms at most ``c0``; the selected model minimizes
``-loglik + Pen(|M|)`` with ``Pen(m) = c1 m (L-1) + c2 m ln(d e / m)``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .mnl_core import (
    CoeffMatrix,
    Convention,
    MarginConfig,
    log_likelihood,
    one_hot,
    validate_design,
    validate_labels,
)

MAX_SUBSETS = 10**6


class BudgetExceededError(RuntimeError):
    """The exhaustive search would evaluate more subsets than allowed."""

    def __init__(self, required: int, budget: int):
        super().__init__(f"exhaustive search needs {required} subset fits, budget is {budget}")
        self.required = required
        self.budget = budget


@dataclass(frozen=True, order=True)
class ModelSubset:
    """Sorted, unique 1-based feature indices."""

    features: tuple[int, ...] = ()

    def __post_init__(self):
        feats = tuple(int(j) for j in self.features)
        if any(j < 1 for j in feats):
            raise ValueError("feature indices are 1-based")
        if any(a >= b for a, b in zip(feats, feats[1:])):
            raise ValueError("feature indices must be strictly increasing")
        object.__setattr__(self, "features", feats)

    @property
    def size(self) -> int:
        return len(self.features)

    def __len__(self):
        return len(self.features)

    def __str__(self):
        return "{" + ",".join(map(str, self.features)) + "}"

    @classmethod
    def parse(cls, text: str) -> "ModelSubset":
        body = text.strip().strip("{}").strip()
        return cls(tuple(int(t) for t in body.split(",")) if body else ())

    def check(self, d: int) -> "ModelSubset":
        if self.features and self.features[-1] > d:
            raise ValueError(f"feature index {self.features[-1]} exceeds d = {d}")
        return self


@dataclass(frozen=True)
class PenaltyConfig:
    L: int
    d: int
    c1: float = 2.0
    c2: float = 2.0

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("c1 and c2 must be positive")
        if self.L < 2 or self.d < 1:
            raise ValueError("need L >= 2 and d >= 1")


def penalty(m: int, cfg: PenaltyConfig) -> float:
    """``c1 m (L-1) + c2 m ln(d e / m)``, zero for the empty model."""
    if m < 0 or m > cfg.d:
        raise ValueError(f"model size {m} outside 0..{cfg.d}")
    if m == 0:
        return 0.0
    return cfg.c1 * m * (cfg.L - 1) + cfg.c2 * m * (math.log(cfg.d / m) + 1.0)


@dataclass(frozen=True)
class FitReport:
    """Outcome of one constrained maximum likelihood fit."""

    coefficients: CoeffMatrix
    negloglik: float
    iterations: int
    residual: float
    converged: bool
    subset: ModelSubset = field(default_factory=ModelSubset)


def _project_columns(W: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(W, axis=0)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return W * scale


def _nll_grad_hess(W, Xm, xi, want_hess=True):
    """Negative log-likelihood over the free columns ``W`` (|M| x (L-1))."""
    S = np.hstack([Xm @ W, np.zeros((Xm.shape[0], 1))])
    mx = S.max(axis=1, keepdims=True)
    E = np.exp(S - mx)
    Z = E.sum(axis=1, keepdims=True)
    nll = float((np.log(Z) + mx).sum() - (S * xi).sum())
    P = (E / Z)[:, :-1]
    G = Xm.T @ (P - xi[:, :-1])
    if not want_hess:
        return nll, G, None
    m, k = W.shape
    # Hessian block (a, b) = X' diag(p_a (delta_ab - p_b)) X, ordered column-major in W
    H = np.empty((k, m, k, m))
    for a in range(k):
        for b in range(a, k):
            w = P[:, a] * ((a == b) - P[:, b])
            blk = (Xm * w[:, None]).T @ Xm
            H[a, :, b, :] = blk
            H[b, :, a, :] = blk.T
    return nll, G, H.reshape(k * m, k * m)


def _newton_directions(W, G, H, radius):
    """Candidate Newton directions, best first.

    Columns sitting on the ball boundary with the gradient pushing outward
    get a Newton step on the Lagrangian restricted to the sphere's tangent
    space; the plain Newton step follows as a second candidate.
    """
    m, k = W.shape
    g = G.T.reshape(-1)
    norms = np.linalg.norm(W, axis=0)
    inner = np.sum(G * W, axis=0)
    active = [a for a in range(k) if norms[a] >= radius * (1 - 1e-9) and inner[a] < 0]
    out = []
    if active:
        mu = -inner[active] / norms[active] ** 2
        Hl = H.copy()
        J = np.zeros((len(active), k * m))
        for i, a in enumerate(active):
            Hl[a * m:(a + 1) * m, a * m:(a + 1) * m] += mu[i] * np.eye(m)
            J[i, a * m:(a + 1) * m] = W[:, a]
        K = np.block([[Hl, J.T], [J, np.zeros((len(active), len(active)))]])
        rhs = np.concatenate([-g, np.zeros(len(active))])
        try:
            sol = np.linalg.solve(K, rhs)
            out.append(sol[:k * m].reshape(k, m).T)
        except np.linalg.LinAlgError:
            pass
    try:
        out.append(-np.linalg.solve(H, g).reshape(k, m).T)
    except np.linalg.LinAlgError:
        pass
    return out


def _nll(W, Xm, xi):
    return _nll_grad_hess(W, Xm, xi, want_hess=False)[0]


def fit_constrained_mle(X, y, M: ModelSubset | Sequence[int], cfg: MarginConfig,
                        L: int | None = None, tol: float | None = None, max_iter: int = 500,
                        W0: np.ndarray | None = None) -> FitReport:
    """Maximum likelihood over ``B`` supported on ``M`` with ``|beta_l|_2 <= c0``.

    Projected Newton with backtracking along the projection arc; when that
    fails to give sufficient decrease a projected gradient step is taken
    instead. Stops when ``|W - P(W - grad)|_F <= tol`` (default
    ``1e-8 * max(1, n)``). Non-convergence is reported, not raised.
    """
    X = validate_design(X)
    y = np.asarray(y)
    L = L or int(y.max())
    y = validate_labels(y, L)
    if y.size != X.shape[0]:
        raise ValueError("X and y have different numbers of observations")
    n, d = X.shape
    M = M if isinstance(M, ModelSubset) else ModelSubset(tuple(M))
    M.check(d)
    xi = one_hot(y, L)
    if M.size == 0:
        B = CoeffMatrix.zeros(d, L)
        return FitReport(B, n * math.log(L), 0, 0.0, True, M)

    tol = 1e-8 * max(1, n) if tol is None else tol
    c0 = cfg.c0
    idx = np.array(M.features) - 1
    Xm = X[:, idx]
    k = L - 1
    W = np.zeros((M.size, k)) if W0 is None else _project_columns(np.array(W0, dtype=float), c0)

    def pg_residual(W, G):
        return float(np.linalg.norm(W - _project_columns(W - G, c0)))

    f, G, H = _nll_grad_hess(W, Xm, xi)
    residual = pg_residual(W, G)
    it = 0
    while residual > tol and it < max_iter:
        it += 1
        # near the optimum f stops resolving decreases, so the residual decides
        slack = 1e-13 * max(1.0, abs(f))

        def progress(W_new, bound):
            f_new, G_new, _ = _nll_grad_hess(W_new, Xm, xi, want_hess=False)
            if not (np.isfinite(f_new) and f_new <= bound + slack):
                return None
            if f_new < f - slack or pg_residual(W_new, G_new) < residual:
                return W_new
            return None

        W_next = None
        for D in _newton_directions(W, G, H, c0):
            t = 1.0
            for _ in range(30):
                W_try = _project_columns(W + t * D, c0)
                W_next = progress(W_try, f + 1e-4 * float(np.sum(G * (W_try - W))))
                if W_next is not None:
                    break
                t *= 0.5
            if W_next is not None:
                break
        if W_next is None:
            # projected gradient, first with the local curvature step 1/lambda_max(H)
            s = 1.0 / max(float(np.linalg.eigvalsh(H)[-1]), 1e-12)
            for _ in range(60):
                W_try = _project_columns(W - s * G, c0)
                diff = W_try - W
                W_next = progress(W_try, f + float(np.sum(G * diff)) + float(np.sum(diff * diff)) / (2 * s))
                if W_next is not None:
                    break
                s *= 0.5
        if W_next is None:
            break  # no representable progress left; reported through the residual
        W = W_next
        f, G, H = _nll_grad_hess(W, Xm, xi)
        residual = pg_residual(W, G)

    B = np.zeros((d, L))
    B[idx, :k] = W
    return FitReport(
        coefficients=CoeffMatrix(B, Convention.REFERENCE_LAST),
        negloglik=f,
        iterations=it,
        residual=residual,
        converged=residual <= tol,
        subset=M,
    )


@dataclass(frozen=True)
class CriterionRow:
    subset: ModelSubset
    negloglik: float
    penalty: float
    criterion: float

    @property
    def size(self) -> int:
        return self.subset.size


@dataclass(frozen=True)
class SelectionResult:
    chosen: ModelSubset
    coefficients: CoeffMatrix
    criterion_table: tuple[CriterionRow, ...]
    fit: FitReport | None = None

    def criterion_csv(self) -> str:
        return criterion_table_csv(self.criterion_table)


def criterion_table_csv(rows: Iterable[CriterionRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=";", lineterminator="\n")
    w.writerow(["subset", "size", "negloglik", "penalty", "criterion"])
    for r in rows:
        w.writerow([str(r.subset), r.size, repr(r.negloglik), repr(r.penalty), repr(r.criterion)])
    return buf.getvalue()


def count_subsets(d: int, max_size: int) -> int:
    return sum(math.comb(d, m) for m in range(max_size + 1))


def default_max_size(d: int, n: int, L: int) -> int:
    return min(d, n // (L - 1))


def enumerate_subsets(d: int, max_size: int):
    """All subsets of 1..d up to ``max_size``, by size then lexicographically."""
    for m in range(max_size + 1):
        for comb in itertools.combinations(range(1, d + 1), m):
            yield ModelSubset(comb)


def select_model(X, y, cfg: PenaltyConfig, margin: MarginConfig, max_size: int | None = None,
                 budget: int = MAX_SUBSETS, n_jobs: int = 1) -> SelectionResult:
    """Exhaustive penalized likelihood selection over all subsets up to ``max_size``.

    Raises :class:`BudgetExceededError` when the number of subsets exceeds
    ``budget`` or ``max_size`` exceeds ``min(d, n // (L-1))``.
    """
    X = validate_design(X)
    n, d = X.shape
    L = cfg.L
    y = validate_labels(y, L)
    if d != cfg.d:
        raise ValueError(f"penalty configured for d = {cfg.d}, data has d = {d}")
    cap = default_max_size(d, n, L)
    max_size = cap if max_size is None else int(max_size)
    if max_size > cap:
        raise BudgetExceededError(count_subsets(d, min(max_size, d)), count_subsets(d, cap))
    required = count_subsets(d, max_size)
    if required > budget:
        raise BudgetExceededError(required, budget)

    subsets = list(enumerate_subsets(d, max_size))

    def run(M):
        return fit_constrained_mle(X, y, M, margin, L=L)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            fits = list(pool.map(run, subsets))
    else:
        fits = [run(M) for M in subsets]

    rows = []
    for M, fit in zip(subsets, fits):
        pen = penalty(M.size, cfg)
        rows.append(CriterionRow(M, fit.negloglik, pen, fit.negloglik + pen))
    # enumeration order is (size, lexicographic), so the first minimizer wins ties
    best = min(range(len(rows)), key=lambda i: (rows[i].criterion, i))
    return SelectionResult(rows[best].subset, fits[best].coefficients, tuple(rows), fits[best])


def plugin_classifier(result: SelectionResult):
    """``x -> argmax_l beta_hat_l . x`` for the selected model (ties to the lowest class)."""
    B = result.coefficients.B.copy()

    def classify(x):
        x = np.asarray(x, dtype=float)
        labels = np.argmax(x @ B, axis=-1) + 1
        return int(labels) if np.ndim(labels) == 0 else labels

    return classify


def cross_validate_scale(X, y, L: int, margin: MarginConfig, scales: Sequence[float],
                         n_folds: int = 5, seed: int = 0, max_size: int | None = None):
    """Choose a common value ``c = c1 = c2`` by K-fold misclassification error.

    Returns ``(best_scale, mean_errors)``.
    """
    X = validate_design(X)
    y = validate_labels(y, L)
    n, d = X.shape
    folds = np.array_split(np.random.default_rng(seed).permutation(n), n_folds)
    errors = np.zeros(len(scales))
    for k, test in enumerate(folds):
        train = np.concatenate([f for i, f in enumerate(folds) if i != k])
        ms = max_size if max_size is not None else default_max_size(d, train.size, L)
        for s_i, c in enumerate(scales):
            res = select_model(X[train], y[train], PenaltyConfig(L, d, c, c), margin, ms)
            errors[s_i] += np.mean(plugin_classifier(res)(X[test]) != y[test]) / n_folds
    return float(scales[int(np.argmin(errors))]), errors.tolist()
