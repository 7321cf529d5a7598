"""Multinomial logistic group Lasso and group Slope.

The estimator minimizes

    (1/n) sum_i { log sum_l exp(beta_l . x_i) - x_i' B xi_i } + sum_j lam_j |B|_(j)

where ``|B|_(1) >= ... >= |B|_(d)`` are the sorted row l2-norms. It is solved
by accelerated proximal gradient (FISTA) with backtracking and a
function-value restart. The prox of the sorted group norm reduces to a
sorted-l1 prox of the row norms, computed with a stack-based
pool-adjacent-violators pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mnl_core import CoeffMatrix, Convention, one_hot, validate_design, validate_labels


class NonFiniteObjectiveError(FloatingPointError):
    """The objective became non-finite, usually a sign of badly scaled data."""


@dataclass(frozen=True)
class LambdaSeq:
    """Nonincreasing positive weights ``lam_1 >= ... >= lam_d > 0``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).ravel()
        if v.size < 1:
            raise ValueError("lambda sequence must be non-empty")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("lambda entries must be finite and positive")
        if np.any(np.diff(v) > 0):
            raise ValueError("lambda sequence must be nonincreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @classmethod
    def constant(cls, value: float, d: int) -> "LambdaSeq":
        return cls(np.full(d, float(value)))


def _as_lambda(lam) -> np.ndarray:
    if isinstance(lam, LambdaSeq):
        return lam.values
    return LambdaSeq(lam).values


def lambda_equal(d: int, L: int, n: int, c0_tune: float = 2.0) -> LambdaSeq:
    """Group Lasso weights: every entry equals ``c0_tune * sqrt((L + ln d) / n)``."""
    _check_counts(d, L, n, c0_tune)
    return LambdaSeq.constant(c0_tune * math.sqrt((L + math.log(d)) / n), d)


def lambda_variable(d: int, L: int, n: int, c0_tune: float = 2.0) -> LambdaSeq:
    """Group Slope weights ``lam_j = c0_tune * sqrt((L + ln(d / j)) / n)``, j = 1..d."""
    _check_counts(d, L, n, c0_tune)
    j = np.arange(1, d + 1)
    return LambdaSeq(c0_tune * np.sqrt((L + np.log(d / j)) / n))


def _check_counts(d, L, n, c0_tune):
    if min(d, L, n) < 1:
        raise ValueError("d, L and n must all be >= 1")
    if not c0_tune > 0:
        raise ValueError("c0_tune must be positive")


def row_norms(B) -> np.ndarray:
    return np.linalg.norm(np.asarray(B, dtype=float), axis=1)


def group_slope_norm(B, lam) -> float:
    """``sum_j lam_j |B|_(j)`` with row norms sorted in decreasing order."""
    lam = _as_lambda(lam)
    B = B.B if isinstance(B, CoeffMatrix) else np.asarray(B, dtype=float)
    if B.shape[0] != lam.size:
        raise ValueError(f"lambda has length {lam.size} but B has {B.shape[0]} rows")
    r = np.sort(row_norms(B))[::-1]
    return float(lam @ r)


def dual_sorted_group_norm(G, lam) -> float:
    """Dual norm of :func:`group_slope_norm`.

    ``max_k (sum_{j<=k} g_(j)) / (sum_{j<=k} lam_j)`` with ``g_(j)`` the row
    norms of ``G`` sorted in decreasing order.
    """
    lam = _as_lambda(lam)
    G = np.asarray(G, dtype=float)
    if G.shape[0] != lam.size:
        raise ValueError(f"lambda has length {lam.size} but G has {G.shape[0]} rows")
    g = np.sort(row_norms(G))[::-1]
    return float(np.max(np.cumsum(g) / np.cumsum(lam)))


def _pava_nonincreasing(z: np.ndarray) -> np.ndarray:
    """Least-squares nonincreasing fit to ``z`` (stack-based pool adjacent violators)."""
    sums: list[float] = []
    counts: list[int] = []
    for value in z:
        s, c = float(value), 1
        # merge while the previous block mean does not exceed the new one
        while sums and sums[-1] * c <= s * counts[-1]:
            s += sums.pop()
            c += counts.pop()
        sums.append(s)
        counts.append(c)
    return np.repeat(np.array(sums) / np.array(counts), counts)


def prox_sorted_l1(r, w) -> np.ndarray:
    """Prox of ``x -> sum_j w_j |x|_(j)`` at a nonnegative vector ``r``.

    ``w`` must be nonincreasing and nonnegative. The result keeps the order of
    ``r`` and is nonnegative.
    """
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    if r.shape != w.shape:
        raise ValueError("weights and input must have the same length")
    if np.any(np.diff(w) > 0) or np.any(w < 0):
        raise ValueError("weights must be nonincreasing and nonnegative")
    order = np.argsort(-r, kind="stable")
    fitted = np.maximum(_pava_nonincreasing(r[order] - w), 0.0)
    out = np.empty_like(r)
    out[order] = fitted
    return out


def _scale_rows(V: np.ndarray, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    factor = np.zeros_like(r)
    nz = r > 0
    factor[nz] = s[nz] / r[nz]
    return V * factor[:, None]


def prox_group_slope(V, lam, t: float = 1.0) -> np.ndarray:
    """``argmin_Z 0.5 |Z - V|_F^2 + t * group_slope_norm(Z, lam)``.

    Rows keep their direction; their norms go through the sorted-l1 prox with
    weights ``t * lam``. Zero rows stay zero.
    """
    if not t > 0:
        raise ValueError("step size must be positive")
    lam = _as_lambda(lam)
    V = np.asarray(V, dtype=float)
    if V.shape[0] != lam.size:
        raise ValueError(f"lambda has length {lam.size} but V has {V.shape[0]} rows")
    r = row_norms(V)
    return _scale_rows(V, r, prox_sorted_l1(r, t * lam))


def prox_group_lasso(V, lam: float, t: float = 1.0) -> np.ndarray:
    """Block soft-thresholding: each row norm ``r -> max(r - t*lam, 0)``."""
    if lam < 0 or not t > 0:
        raise ValueError("need lam >= 0 and t > 0")
    V = np.asarray(V, dtype=float)
    r = row_norms(V)
    return _scale_rows(V, r, np.maximum(r - t * lam, 0.0))


# --------------------------------------------------------------------------
# smooth part


def _loss_and_grad(B, X, xi, need_grad=True):
    n = X.shape[0]
    S = X @ B
    m = S.max(axis=1, keepdims=True)
    E = np.exp(S - m)
    Z = E.sum(axis=1, keepdims=True)
    loss = float((np.log(Z) + m).sum() - (S * xi).sum()) / n
    if not need_grad:
        return loss, None
    return loss, X.T @ (E / Z - xi) / n


def smooth_loss(B, X, y) -> float:
    """Average negative log-likelihood ``-(1/n) log_likelihood(B)``."""
    B = B.B if isinstance(B, CoeffMatrix) else np.asarray(B, dtype=float)
    X = validate_design(X)
    return _loss_and_grad(B, X, one_hot(y, B.shape[1]), need_grad=False)[0]


def slope_objective(B, X, y, lam) -> float:
    return smooth_loss(B, X, y) + group_slope_norm(B, lam)


@dataclass(frozen=True)
class SolverOptions:
    """FISTA settings.

    ``tol_kkt`` is the certificate threshold, ``tol_rel`` the relative
    objective-change threshold at which the solver stops as stalled.
    """

    tol_kkt: float = 1e-6
    tol_rel: float = 1e-10
    max_iter: int = 20000
    step0: float = 1.0
    support_tol: float = 1e-6
    kkt_every: int = 5
    debug: bool = False


@dataclass(frozen=True)
class SlopeFit:
    coefficients: CoeffMatrix
    objective_trace: np.ndarray
    kkt_residual: float
    iterations: int
    support: tuple[int, ...]
    converged: bool
    status: str
    restarts: tuple[int, ...] = field(default=())
    dual_residual: float = math.nan
    alignment_residual: float = math.nan

    @property
    def B(self) -> np.ndarray:
        return self.coefficients.B

    def predict(self, X) -> np.ndarray:
        return np.argmax(np.asarray(X, dtype=float) @ self.B, axis=1) + 1


def support_of(B, support_tol: float = 1e-6) -> tuple[int, ...]:
    """1-based indices of rows whose norm exceeds ``support_tol * max row norm``."""
    r = row_norms(B)
    top = r.max() if r.size else 0.0
    if top == 0:
        return ()
    return tuple(int(j) + 1 for j in np.flatnonzero(r > support_tol * top))


def _kkt(B, grad, norm_value, dual_value):
    """Certificate for ``-grad in subdiff(norm)(B)``.

    For a norm, ``G`` is a subgradient at ``B`` iff ``dual(G) <= 1`` and
    ``<G, B> = norm(B)``; the second part only involves the active rows.
    """
    G = -grad
    dual_res = max(0.0, dual_value(G) - 1.0)
    pen = norm_value(B)
    align = abs(pen - float(np.sum(G * B))) / pen if pen > 0 else 0.0
    return dual_res + align, dual_res, align


def _fista(X, xi, prox, norm_value, dual_value, opts: SolverOptions, B0=None) -> SlopeFit:
    n, d = X.shape
    L = xi.shape[1]
    x = np.zeros((d, L)) if B0 is None else np.array(B0, dtype=float)
    x -= x.mean(axis=1, keepdims=True)
    y = x.copy()
    theta = 1.0
    step = opts.step0

    f_x, g_x = _loss_and_grad(x, X, xi)
    F_prev = f_x + norm_value(x)
    if not math.isfinite(F_prev):
        raise NonFiniteObjectiveError("objective is not finite at the starting point")
    trace = [F_prev]
    restarts: list[int] = []
    status = "max_iter"
    kkt = (math.inf, math.inf, math.inf)
    momentum = False
    it = 0

    while it < opts.max_iter:
        it += 1
        if momentum:
            f_y, g_y = _loss_and_grad(y, X, xi)
        else:
            f_y, g_y = f_x, g_x
        while True:
            x_new = prox(y - step * g_y, step)
            diff = x_new - y
            f_new, g_new = _loss_and_grad(x_new, X, xi)
            bound = f_y + float(np.sum(g_y * diff)) + float(np.sum(diff * diff)) / (2 * step)
            if f_new <= bound + 1e-15 * max(1.0, abs(f_y)):
                break
            step *= 0.5
            if step < 1e-20:
                raise NonFiniteObjectiveError("backtracking failed to find a step")
        F_new = f_new + norm_value(x_new)
        if not math.isfinite(F_new):
            raise NonFiniteObjectiveError("objective became non-finite; check feature scaling")

        if momentum and F_new > F_prev:
            # function-value restart: discard the step and drop the momentum
            restarts.append(len(trace) - 1)
            y = x
            theta = 1.0
            momentum = False
            continue

        theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        y = x_new + ((theta - 1.0) / theta_new) * (x_new - x)
        x, f_x, g_x = x_new, f_new, g_new
        theta = theta_new
        momentum = True
        if opts.debug:
            assert np.all(np.abs(x.sum(axis=1)) <= 1e-10 * max(1.0, np.abs(x).max()))
        trace.append(F_new)
        rel = abs(F_prev - F_new) / max(abs(F_new), 1e-300)
        F_prev = F_new

        if rel <= opts.tol_rel or it % opts.kkt_every == 0:
            kkt = _kkt(x, g_x, norm_value, dual_value)
            if kkt[0] <= opts.tol_kkt:
                status = "kkt"
                break
            if rel == 0.0 or (rel <= opts.tol_rel and _stalled(trace, opts)):
                status = "stalled"
                break

    if status == "max_iter":
        kkt = _kkt(x, g_x, norm_value, dual_value)
    x = x - x.mean(axis=1, keepdims=True)
    return SlopeFit(
        coefficients=CoeffMatrix(x, Convention.ZERO_ROW_MEAN),
        objective_trace=np.array(trace),
        kkt_residual=kkt[0],
        iterations=it,
        support=support_of(x, opts.support_tol),
        converged=status != "max_iter",
        status=status,
        restarts=tuple(restarts),
        dual_residual=kkt[1],
        alignment_residual=kkt[2],
    )


def _stalled(trace, opts: SolverOptions, window: int = 50) -> bool:
    if len(trace) <= window:
        return False
    a, b = trace[-window - 1], trace[-1]
    return abs(a - b) <= opts.tol_rel * abs(b)


def _prepare(X, y, L):
    X = validate_design(X)
    if L is None:
        L = int(np.max(y))
    y = validate_labels(y, L)
    if y.size != X.shape[0]:
        raise ValueError("X and y have different numbers of observations")
    return X, one_hot(y, L)


def fit_group_slope(X, y, lam, opts: SolverOptions | None = None, L: int | None = None,
                    B0=None) -> SlopeFit:
    """Multinomial logistic group Slope.

    Parameters
    ----------
    X : (n, d) array
    y : (n,) labels in 1..L
    lam : LambdaSeq or nonincreasing array of length d
    opts : SolverOptions
    L : number of classes, inferred as ``max(y)`` when omitted
    B0 : optional warm start (row-centred before use)

    Returns a :class:`SlopeFit` whose coefficients have zero row means.
    """
    opts = opts or SolverOptions()
    lam = _as_lambda(lam)
    X, xi = _prepare(X, y, L)
    if lam.size != X.shape[1]:
        raise ValueError(f"lambda has length {lam.size} but X has {X.shape[1]} columns")
    return _fista(
        X, xi,
        prox=lambda V, t: prox_group_slope(V, lam, t),
        norm_value=lambda B: group_slope_norm(B, lam),
        dual_value=lambda G: dual_sorted_group_norm(G, lam),
        opts=opts, B0=B0,
    )


def fit_group_lasso(X, y, lam: float, opts: SolverOptions | None = None, L: int | None = None,
                    B0=None) -> SlopeFit:
    """Multinomial logistic group Lasso with a single weight ``lam >= 0``.

    Uses block soft-thresholding and the plain sum of row norms; it shares
    only the FISTA driver with :func:`fit_group_slope`.
    """
    opts = opts or SolverOptions()
    lam = float(lam)
    if not lam >= 0:
        raise ValueError("lam must be nonnegative")
    X, xi = _prepare(X, y, L)

    def norm_value(B):
        return lam * float(row_norms(B).sum())

    def dual_value(G):
        top = float(row_norms(G).max())
        if lam == 0:
            # unpenalized: the certificate reduces to plain stationarity
            return 1.0 + top
        return top / lam

    return _fista(X, xi, prox=lambda V, t: prox_group_lasso(V, lam, t),
                  norm_value=norm_value, dual_value=dual_value, opts=opts, B0=B0)


def tune_c0(X, y, grid: Sequence[float], lambda_kind: str = "variable", val_fraction: float = 0.25,
            seed: int = 0, opts: SolverOptions | None = None, L: int | None = None):
    """Pick ``c0_tune`` from ``grid`` by hold-out misclassification error.

    Returns ``(best_c0, errors)`` with one validation error per grid value.
    """
    X = validate_design(X)
    y = np.asarray(y)
    L = L or int(y.max())
    rng = np.random.default_rng(seed)
    perm = rng.permutation(X.shape[0])
    n_val = max(1, int(round(val_fraction * X.shape[0])))
    val, tr = perm[:n_val], perm[n_val:]
    make: Callable = lambda_variable if lambda_kind == "variable" else lambda_equal
    errors = []
    for c in grid:
        lam = make(X.shape[1], L, tr.size, c)
        fit = fit_group_slope(X[tr], y[tr], lam, opts, L=L)
        errors.append(float(np.mean(fit.predict(X[val]) != y[val])))
    best = int(np.argmin(errors))
    return float(grid[best]), errors
