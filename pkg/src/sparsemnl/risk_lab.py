"""Risk, divergence and margin metrics.

Monte-Carlo estimators take a feature generator and a seed and use the
true conditional class probabilities wherever possible (Rao-Blackwellized
"conditional" estimates); the label-sampling "empirical" versions are kept
for cross-checks.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .mnl_core import CoeffLike, Generator, as_array, draw_labels, softmax_probs, validate_design


class RiskMethod(str, enum.Enum):
    EMPIRICAL = "Empirical"
    CONDITIONAL = "Conditional"


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    std_error: float
    n_mc: int
    method: RiskMethod = RiskMethod.CONDITIONAL

    def __post_init__(self):
        # empirical excess-risk differences may be slightly negative
        if not -1.0 <= self.value <= 1.0:
            raise ValueError(f"risk value {self.value} outside [-1, 1]")
        if not self.std_error >= 0:
            raise ValueError("std_error must be nonnegative")
        object.__setattr__(self, "method", RiskMethod(self.method))


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _draw_probs(B_true: CoeffLike, gen: Generator, n_mc: int, seed: int):
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    rng = np.random.default_rng(seed)
    X = gen.sample(n_mc, rng)
    return X, softmax_probs(as_array(B_true), X), rng


def _labels(classifier: Callable, X: np.ndarray) -> np.ndarray:
    labels = np.asarray(classifier(X)).astype(np.int64).reshape(-1)
    if labels.size != X.shape[0]:
        raise ValueError("classifier must return one label per row")
    return labels


def bayes_risk(B_true: CoeffLike, gen: Generator, n_mc: int, seed: int,
               method: RiskMethod | str = RiskMethod.CONDITIONAL) -> RiskEstimate:
    """Estimate ``1 - E_X max_l p_l(X)``.

    The empirical method samples labels and counts Bayes-classifier errors.
    """
    method = RiskMethod(method)
    X, P, rng = _draw_probs(B_true, gen, n_mc, seed)
    if method is RiskMethod.CONDITIONAL:
        v = 1.0 - P.max(axis=1)
    else:
        y = draw_labels(P, rng)
        v = (y != np.argmax(P, axis=1) + 1).astype(float)
    mean, se = _mean_se(v)
    return RiskEstimate(mean, se, n_mc, method)


def misclassification_risk(classifier: Callable, B_true: CoeffLike, gen: Generator, n_mc: int,
                           seed: int, method: RiskMethod | str = RiskMethod.CONDITIONAL) -> RiskEstimate:
    """``P(Y != classifier(X))`` under the true model."""
    method = RiskMethod(method)
    X, P, rng = _draw_probs(B_true, gen, n_mc, seed)
    lab = _labels(classifier, X)
    if method is RiskMethod.CONDITIONAL:
        v = 1.0 - P[np.arange(lab.size), lab - 1]
    else:
        v = (draw_labels(P, rng) != lab).astype(float)
    mean, se = _mean_se(v)
    return RiskEstimate(mean, se, n_mc, method)


def excess_risk(classifier: Callable, B_true: CoeffLike, gen: Generator, n_mc: int, seed: int,
                method: RiskMethod | str = RiskMethod.CONDITIONAL) -> RiskEstimate:
    """Excess misclassification risk of ``classifier`` over the Bayes rule.

    ``classifier`` maps an ``n x d`` array to labels in 1..L. The conditional
    estimate averages ``p_{eta*(X)}(X) - p_{eta(X)}(X)``; the empirical one
    differences the error indicators of both rules on shared sampled labels.
    Both terms always use the same draws.
    """
    method = RiskMethod(method)
    X, P, rng = _draw_probs(B_true, gen, n_mc, seed)
    lab = _labels(classifier, X)
    bayes = np.argmax(P, axis=1)
    rows = np.arange(lab.size)
    if method is RiskMethod.CONDITIONAL:
        v = P[rows, bayes] - P[rows, lab - 1]
    else:
        y = draw_labels(P, rng)
        v = (y != lab).astype(float) - (y != bayes + 1).astype(float)
    mean, se = _mean_se(v)
    return RiskEstimate(mean, se, n_mc, method)


def disagreement(classifier: Callable, B_true: CoeffLike, gen: Generator, n_mc: int, seed: int) -> float:
    """``P(eta(X) != eta*(X))``."""
    X, P, _ = _draw_probs(B_true, gen, n_mc, seed)
    return float(np.mean(_labels(classifier, X) != np.argmax(P, axis=1) + 1))


def _check_simplex(p: np.ndarray, name: str):
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} is not a probability vector")


def kl_divergence(p, q) -> float:
    """``sum_l p_l ln(p_l / q_l)`` with ``0 ln 0 = 0``; ``inf`` if ``q_l = 0 < p_l``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    _check_simplex(p, "p")
    _check_simplex(q, "q")
    pos = p > 0
    if np.any(q[pos] == 0):
        return math.inf
    return max(0.0, float(np.sum(p[pos] * np.log(p[pos] / q[pos]))))


def hellinger_sq(p, q) -> float:
    """Square Hellinger distance ``0.5 sum_l (sqrt(p_l) - sqrt(q_l))^2``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    _check_simplex(p, "p")
    _check_simplex(q, "q")
    return float(min(1.0, 0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)))


def kl_hellinger_constant(delta: float) -> float:
    """``4 (1 - delta)^2 / delta^2``, the KL-to-squared-Hellinger factor for delta-interior vectors."""
    return 4.0 * (1.0 - delta) ** 2 / delta**2


def weighted_frobenius(B1: CoeffLike, B2: CoeffLike, X) -> float:
    """``sqrt(tr((B1-B2)' G (B1-B2)))`` with ``G = X'X / n`` the empirical second-moment matrix."""
    D = as_array(B1) - as_array(B2)
    X = validate_design(X)
    if X.shape[1] != D.shape[0]:
        raise ValueError("dimension mismatch between X and B")
    XD = X @ D
    return math.sqrt(max(0.0, float(np.sum(XD * XD)) / X.shape[0]))


@dataclass(frozen=True)
class MarginProfile:
    grid: np.ndarray
    probs: np.ndarray
    alpha_hat: float
    c_hat: float
    fit_ok: bool
    n_points: int


def top_two_gap(P: np.ndarray) -> np.ndarray:
    """``p_(1) - p_(2)`` per row."""
    part = np.sort(P, axis=1)
    return part[:, -1] - part[:, -2]


def margin_profile_from_gaps(gaps, h_grid) -> MarginProfile:
    """Empirical ``P(gap <= h)`` on ``h_grid`` and a log-log power-law fit.

    Grid points with estimated probability 0 or 1 are left out of the fit;
    fewer than two usable points leave the fit undefined (``fit_ok=False``).
    """
    h = np.asarray(h_grid, dtype=float)
    if h.ndim != 1 or h.size < 1 or np.any(h <= 0) or np.any(np.diff(h) <= 0):
        raise ValueError("h_grid must be positive and strictly increasing")
    g = np.sort(np.asarray(gaps, dtype=float))
    probs = np.searchsorted(g, h, side="right") / g.size
    use = (probs > 0) & (probs < 1)
    if use.sum() < 2:
        return MarginProfile(h, probs, math.nan, math.nan, False, int(use.sum()))
    slope, intercept = np.polyfit(np.log(h[use]), np.log(probs[use]), 1)
    return MarginProfile(h, probs, float(slope), float(math.exp(intercept)), True, int(use.sum()))


def margin_profile(B_true: CoeffLike, gen: Generator, h_grid, n_mc: int, seed: int) -> MarginProfile:
    """Estimate the low-noise profile ``h -> P(p_(1)(X) - p_(2)(X) <= h)``.

    Fits ``ln P = ln c + alpha ln h`` by least squares.
    """
    _, P, _ = _draw_probs(B_true, gen, n_mc, seed)
    return margin_profile_from_gaps(top_two_gap(P), h_grid)


@dataclass(frozen=True)
class PowerMarginGenerator:
    """One-feature generator whose binary top-two gap has ``P(gap <= h) = (h / h_max)^alpha``.

    Paired with ``B = [[b, 0]]`` the gap is ``|tanh(b x / 2)|``; the feature
    is drawn by inverting that map at ``gap = h_max * U^(1/alpha)`` with a
    random sign.
    """

    alpha: float = 1.0
    b: float = 2.0
    h_max: float = 0.9
    d: int = 1

    def __post_init__(self):
        if not (self.alpha > 0 and self.b > 0 and 0 < self.h_max < 1):
            raise ValueError("need alpha > 0, b > 0 and 0 < h_max < 1")

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([[self.b, 0.0]])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        gap = self.h_max * rng.random(n) ** (1.0 / self.alpha)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return (sign * 2.0 * np.arctanh(gap) / self.b)[:, None]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    n_points: int


def rate_fit(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least-squares slope of ``ln(risk)`` on ``ln(n)``.

    Points with nonpositive risk are dropped (with a warning); fewer than
    three remaining points is an error.
    """
    pts = [(float(n), float(r)) for n, r in points]
    keep = [(n, r) for n, r in pts if r > 0 and n > 0]
    if len(keep) < len(pts):
        warnings.warn(f"rate_fit: dropped {len(pts) - len(keep)} nonpositive points", stacklevel=2)
    if len(keep) < 3:
        raise ValueError(f"rate_fit needs at least 3 positive points, got {len(keep)}")
    ln_n = np.log([p[0] for p in keep])
    ln_r = np.log([p[1] for p in keep])
    if np.ptp(ln_n) == 0:
        raise ValueError("rate_fit needs at least two distinct n values")
    slope, intercept = np.polyfit(ln_n, ln_r, 1)
    resid = ln_r - (slope * ln_n + intercept)
    ss_tot = float(np.sum((ln_r - ln_r.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, len(keep))
