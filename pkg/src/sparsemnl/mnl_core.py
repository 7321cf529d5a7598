"""Multinomial logistic model: probabilities, likelihood, gradient, sampling.

Labels are 1-based integers in ``{1, ..., L}`` throughout the public API.
Coefficient matrices are ``d x L`` with one column per class.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Protocol, Union

import numpy as np


class Convention(str, enum.Enum):
    """Identification convention of a coefficient matrix."""

    REFERENCE_LAST = "ReferenceLast"
    ZERO_ROW_MEAN = "ZeroRowMean"


_ROW_MEAN_TOL = 1e-10


@dataclass(frozen=True)
class CoeffMatrix:
    """A ``d x L`` coefficient matrix with an explicit identification convention.

    ``ReferenceLast`` pins the last column to zero; ``ZeroRowMean`` requires
    every row to sum to zero. Both describe the same set of class
    probabilities (see :meth:`to`).
    """

    B: np.ndarray
    convention: Convention = Convention.REFERENCE_LAST

    def __post_init__(self):
        B = np.array(self.B, dtype=float, copy=True)
        if B.ndim != 2 or B.shape[0] < 1 or B.shape[1] < 2:
            raise ValueError(f"coefficient matrix must be d x L with L >= 2, got {B.shape}")
        if not np.all(np.isfinite(B)):
            raise ValueError("coefficients must be finite (degenerate +-inf rows are not supported)")
        conv = Convention(self.convention)
        if conv is Convention.REFERENCE_LAST and np.any(B[:, -1] != 0.0):
            raise ValueError("ReferenceLast convention requires the last column to be 0")
        if conv is Convention.ZERO_ROW_MEAN:
            scale = max(1.0, float(np.abs(B).max()))
            if np.any(np.abs(B.sum(axis=1)) > _ROW_MEAN_TOL * scale):
                raise ValueError("ZeroRowMean convention requires rows summing to 0")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "convention", conv)

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def L(self) -> int:
        return self.B.shape[1]

    def to(self, convention: Convention | str) -> "CoeffMatrix":
        """Reparametrize to another convention; class probabilities are unchanged."""
        convention = Convention(convention)
        if convention is self.convention:
            return self
        if convention is Convention.REFERENCE_LAST:
            B = self.B - self.B[:, -1:]
            B[:, -1] = 0.0
        else:
            B = self.B - self.B.mean(axis=1, keepdims=True)
        return CoeffMatrix(B, convention)

    @classmethod
    def zeros(cls, d: int, L: int, convention: Convention | str = Convention.REFERENCE_LAST):
        return cls(np.zeros((d, L)), Convention(convention))

    @classmethod
    def reference_last(cls, free: np.ndarray) -> "CoeffMatrix":
        """Build from the ``d x (L-1)`` free columns, appending a zero last column."""
        free = np.atleast_2d(np.asarray(free, dtype=float))
        return cls(np.hstack([free, np.zeros((free.shape[0], 1))]), Convention.REFERENCE_LAST)


CoeffLike = Union[CoeffMatrix, np.ndarray]


def as_array(B: CoeffLike) -> np.ndarray:
    if isinstance(B, CoeffMatrix):
        return B.B
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise ValueError("coefficients must be a 2-d array")
    return B


@dataclass(frozen=True)
class MarginConfig:
    """Assumption A margin: class probabilities bounded inside ``(delta, 1 - delta)``."""

    delta: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 1/2), got {self.delta}")

    @property
    def c0(self) -> float:
        return math.log((1.0 - self.delta) / self.delta)


def validate_design(X, standardized: bool = False) -> np.ndarray:
    """Return ``X`` as a finite float ``n x d`` array.

    With ``standardized=True`` every column must have empirical second
    moment within 1e-6 of one.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"design must be an n x d array with n, d >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design contains non-finite entries")
    if standardized:
        m2 = np.mean(X**2, axis=0)
        if np.any(np.abs(m2 - 1.0) > 1e-6):
            raise ValueError("design columns are not standardized to unit second moment")
    return X


def standardize(X) -> np.ndarray:
    """Scale columns to unit empirical second moment (no centering)."""
    X = validate_design(X)
    scale = np.sqrt(np.mean(X**2, axis=0))
    scale[scale == 0] = 1.0
    return X / scale


def validate_labels(y, L: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("labels must be a non-empty 1-d sequence")
    if L < 2:
        raise ValueError("need at least two classes")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
    if y.min() < 1 or y.max() > L:
        raise ValueError(f"labels must lie in 1..{L}")
    return y.astype(np.int64)


def one_hot(y, L: int) -> np.ndarray:
    """Indicator matrix with ``xi[i, l-1] = 1`` iff ``y[i] == l``."""
    y = validate_labels(y, L)
    xi = np.zeros((y.size, L))
    xi[np.arange(y.size), y - 1] = 1.0
    return xi


def _check_shapes(B: np.ndarray, X: np.ndarray):
    if X.shape[-1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: x has {X.shape[-1]} features, B has {B.shape[0]} rows")


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=-1, keepdims=True)
    z = scores - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_probs(B: CoeffLike, x) -> np.ndarray:
    """Class probabilities ``exp(beta_l . x) / sum_k exp(beta_k . x)``.

    ``x`` may be a single d-vector or an ``n x d`` array, in which case one
    row of probabilities is returned per observation.
    """
    B = as_array(B)
    x = np.asarray(x, dtype=float)
    _check_shapes(B, x)
    scores = x @ B
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_likelihood(B: CoeffLike, X, y) -> float:
    """Conditional log-likelihood ``sum_i { x_i' B xi_i - log sum_l exp(beta_l . x_i) }``."""
    B = as_array(B)
    X = validate_design(X)
    _check_shapes(B, X)
    y = validate_labels(y, B.shape[1])
    if y.size != X.shape[0]:
        raise ValueError("X and y have different numbers of observations")
    logp = _log_softmax(X @ B)
    return float(logp[np.arange(y.size), y - 1].sum())


def neg_loglik_gradient(B: CoeffLike, X, y) -> np.ndarray:
    """Gradient of ``-log_likelihood`` with respect to ``B``.

    Entry ``(j, l)`` is ``sum_i x_ij (p_l(x_i) - xi_il)``. For a
    ``ReferenceLast`` matrix the last column is zeroed, for ``ZeroRowMean``
    the gradient is row-centred, so a step along it stays in the convention.
    Plain arrays get the unconstrained gradient.
    """
    conv = B.convention if isinstance(B, CoeffMatrix) else None
    Barr = as_array(B)
    X = validate_design(X)
    _check_shapes(Barr, X)
    xi = one_hot(y, Barr.shape[1])
    if xi.shape[0] != X.shape[0]:
        raise ValueError("X and y have different numbers of observations")
    G = X.T @ (softmax_probs(Barr, X) - xi)
    if conv is Convention.REFERENCE_LAST:
        G[:, -1] = 0.0
    elif conv is Convention.ZERO_ROW_MEAN:
        G -= G.mean(axis=1, keepdims=True)
    return G


def bayes_classify(B: CoeffLike, x) -> np.ndarray | int:
    """``argmax_l beta_l . x`` with ties going to the lowest class index.

    Returns an int for a single d-vector, an int array for an ``n x d`` input.
    """
    B = as_array(B)
    x = np.asarray(x, dtype=float)
    _check_shapes(B, x)
    # np.argmax returns the first maximiser, which is the lowest-index tie-break
    labels = np.argmax(x @ B, axis=-1) + 1
    if np.ndim(labels) == 0:
        return int(labels)
    return labels.astype(np.int64)


class Generator(Protocol):
    d: int

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray: ...


_KINDS = ("uniform", "gaussian", "ball")


@dataclass(frozen=True)
class FeatureGenerator:
    """I.i.d. feature rows.

    ``uniform``: coordinates uniform on ``[-sqrt(3), sqrt(3)]`` (bounded, unit
    second moment). ``gaussian``: standard normal. ``ball``: standard normal
    conditioned on ``|x|_2 <= radius`` (rejection sampling).
    """

    d: int
    kind: str = "uniform"
    radius: float | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("generator needs d >= 1")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "ball":
            r = self.radius if self.radius is not None else 2.0 * math.sqrt(self.d)
            if not r > 0:
                raise ValueError("ball radius must be positive")
            object.__setattr__(self, "radius", float(r))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform":
            s = math.sqrt(3.0)
            return rng.uniform(-s, s, size=(n, self.d))
        if self.kind == "gaussian":
            return rng.standard_normal((n, self.d))
        out = np.empty((n, self.d))
        filled = 0
        while filled < n:
            batch = rng.standard_normal((max(2 * (n - filled), 16), self.d))
            keep = batch[np.linalg.norm(batch, axis=1) <= self.radius]
            take = min(keep.shape[0], n - filled)
            out[filled : filled + take] = keep[:take]
            filled += take
        return out

    def sup_abs_score(self, beta: np.ndarray) -> float:
        """``sup_x |beta . x|`` over the support (``inf`` when unbounded)."""
        beta = np.asarray(beta, dtype=float)
        if self.kind == "uniform":
            return math.sqrt(3.0) * float(np.abs(beta).sum())
        if self.kind == "ball":
            return self.radius * float(np.linalg.norm(beta))
        return math.inf if np.any(beta != 0) else 0.0


def draw_labels(P: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One multinomial draw per row of ``P`` by inverse CDF; returns 1-based labels."""
    u = rng.random(P.shape[0])
    cdf = np.cumsum(P, axis=1)
    y = (cdf < u[:, None]).sum(axis=1) + 1
    return np.minimum(y, P.shape[1]).astype(np.int64)


def sample_dataset(B: CoeffLike, gen: Generator, n: int, seed: int):
    """Draw ``n`` i.i.d. pairs ``(x_i, y_i)`` with ``y_i ~ Mult(softmax_probs(B, x_i))``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    Barr = as_array(B)
    if getattr(gen, "d", None) != Barr.shape[0]:
        raise ValueError("generator dimension does not match B")
    rng = np.random.default_rng(seed)
    X = gen.sample(n, rng)
    y = draw_labels(softmax_probs(Barr, X), rng)
    return X, y


@dataclass(frozen=True)
class AssumptionAReport:
    holds: bool
    worst_margin: float
    c0: float = field(default=math.nan)


def check_assumption_a(B: CoeffLike, X, cfg: MarginConfig) -> AssumptionAReport:
    """Check ``max_{i,l} |beta_l . x_i| < c0`` on the rows of ``X``.

    A :class:`CoeffMatrix` is first expressed in the ``ReferenceLast``
    convention, the parametrization in which the margin is stated.
    """
    if isinstance(B, CoeffMatrix):
        B = B.to(Convention.REFERENCE_LAST)
    Barr = as_array(B)
    X = validate_design(X)
    _check_shapes(Barr, X)
    worst = float(np.abs(X @ Barr).max())
    return AssumptionAReport(holds=worst < cfg.c0, worst_margin=worst, c0=cfg.c0)
