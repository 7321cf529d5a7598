import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from sparsemnl.bench import ScenarioConfig, generate_scenario
from sparsemnl.mnl_core import (
    CoeffMatrix,
    Convention,
    FeatureGenerator,
    MarginConfig,
    bayes_classify,
    log_likelihood,
    sample_dataset,
)
from sparsemnl.subset_select import (
    BudgetExceededError,
    ModelSubset,
    PenaltyConfig,
    SelectionResult,
    count_subsets,
    criterion_table_csv,
    cross_validate_scale,
    default_max_size,
    enumerate_subsets,
    fit_constrained_mle,
    penalty,
    plugin_classifier,
    select_model,
)

# seed-pinned calibration counts (scripts/calibrate_selection.py)
NOISE_EMPTY_MIN = 50  # of 50 seeds
SUPPORT_COVER_MIN = 10  # of the first 10 seeds


# --- ModelSubset and penalty ---------------------------------------------------


def test_model_subset_validation():
    assert ModelSubset((1, 3)).size == 2
    assert str(ModelSubset((1, 3))) == "{1,3}" and str(ModelSubset()) == "{}"
    assert ModelSubset.parse("{2,5}") == ModelSubset((2, 5))
    assert ModelSubset.parse("{}") == ModelSubset()
    for bad in [(0,), (2, 1), (1, 1)]:
        with pytest.raises(ValueError):
            ModelSubset(bad)
    with pytest.raises(ValueError):
        ModelSubset((1, 4)).check(3)


def test_penalty_examples():
    cfg = PenaltyConfig(L=3, d=10)
    assert penalty(0, cfg) == 0
    assert penalty(10, cfg) == pytest.approx(2 * 10 * 2 + 2 * 10, rel=1e-15)
    assert penalty(1, cfg) == pytest.approx(10.605, abs=5e-4)
    assert penalty(1, cfg) == pytest.approx(4 + 2 * (1 + math.log(10)), rel=1e-15)
    with pytest.raises(ValueError):
        penalty(11, cfg)
    with pytest.raises(ValueError):
        PenaltyConfig(3, 10, c1=0)


@given(st.integers(1, 60), st.integers(2, 30), st.floats(0.01, 10), st.floats(0.01, 10))
def test_penalty_strictly_increasing(d, L, c1, c2):
    cfg = PenaltyConfig(L, d, c1, c2)
    vals = [penalty(m, cfg) for m in range(d + 1)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@given(st.integers(1, 500), st.integers(2, 40), st.data(), st.floats(0.1, 5))
def test_regime_boundary_arithmetic(d, L, data, c):
    m = data.draw(st.integers(1, d))
    cfg = PenaltyConfig(L, d, c, c)
    first = cfg.c1 * m * (L - 1)
    second = penalty(m, cfg) - first
    boundary = 2 + math.log(d / m)
    if abs(L - boundary) > 1e-9:
        assert (first > second) == (L > boundary)


def test_enumeration_order_and_counts():
    subs = list(enumerate_subsets(3, 2))
    assert [str(s) for s in subs] == ["{}", "{1}", "{2}", "{3}", "{1,2}", "{1,3}", "{2,3}"]
    assert count_subsets(3, 2) == 7 and count_subsets(25, 25) == 2**25
    assert default_max_size(10, 7, 3) == 3


# --- constrained MLE ---------------------------------------------------------------------


def test_empty_model_is_null():
    X = np.random.default_rng(0).normal(size=(9, 2))
    fit = fit_constrained_mle(X, [1, 2, 3] * 3, (), MarginConfig())
    assert np.all(fit.coefficients.B == 0)
    assert fit.negloglik == pytest.approx(9 * math.log(3))


def test_balanced_noise_gives_zero():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]] * 2)
    y = np.array([1, 1, 1, 1, 2, 2, 2, 2])
    fit = fit_constrained_mle(X, y, (1,), MarginConfig())
    assert np.linalg.norm(fit.coefficients.B) <= 1e-4
    assert fit.converged


def test_separable_hits_constraint_and_matches_grid():
    X = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
    y = np.array([2, 2, 2, 1, 1, 1])
    cfg = MarginConfig(0.2)
    fit = fit_constrained_mle(X, y, (1,), cfg)
    w = fit.coefficients.B[0, 0]
    assert abs(abs(w) - cfg.c0) <= 1e-6
    grid = np.linspace(-cfg.c0, cfg.c0, 20001)
    nll = [-log_likelihood(CoeffMatrix.reference_last([[g]]), X, y) for g in grid]
    assert w == pytest.approx(grid[int(np.argmin(nll))], abs=1e-3)
    assert fit.negloglik <= min(nll) + 1e-12


def test_consistency_at_large_n():
    B_true = CoeffMatrix(np.array([[1.0, -0.5, 0.0], [0.0, 0.0, 0.0], [-0.4, 0.8, 0.0]]))
    X, y = sample_dataset(B_true, FeatureGenerator(3), 10_000, seed=2024)
    fit = fit_constrained_mle(X, y, (1, 3), MarginConfig())
    assert fit.converged
    assert np.linalg.norm(fit.coefficients.B - B_true.B) <= 0.1
    assert np.all(fit.coefficients.B[1] == 0) and np.all(fit.coefficients.B[:, -1] == 0)


def test_nested_models_fit_better(rng):
    sc = generate_scenario(ScenarioConfig(d=5, d0=2, L=3, n=400, seed=4))
    m = MarginConfig()
    prev = fit_constrained_mle(sc.X, sc.y, (), m, L=3).negloglik
    for M in [(1,), (1, 2), (1, 2, 4), (1, 2, 3, 4, 5)]:
        f = fit_constrained_mle(sc.X, sc.y, M, m, L=3)
        assert f.converged
        assert f.negloglik <= prev + 1e-6
        prev = f.negloglik


def test_column_norms_within_c0():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] > 0).astype(int) + 1 + (X[:, 1] > 0.5)
    m = MarginConfig(0.1)
    fit = fit_constrained_mle(X, y, (1, 2, 3), m, L=3)
    assert np.linalg.norm(fit.coefficients.B, axis=0).max() <= m.c0 + 1e-8
    assert fit.residual <= 1e-8 * 60


# --- selection --------------------------------------------------------------------------


def _noise_trial(seed):
    rng = np.random.default_rng(seed)
    X = FeatureGenerator(6).sample(500, rng)
    y = rng.integers(1, 4, size=500)
    return select_model(X, y, PenaltyConfig(3, 6), MarginConfig()).chosen.size == 0


def test_noise_labels_choose_empty_model():
    assert sum(_noise_trial(s) for s in range(50)) >= NOISE_EMPTY_MIN


def test_sparse_support_is_covered():
    covered = 0
    for s in range(10):
        sc = generate_scenario(ScenarioConfig(d=10, d0=2, L=3, n=2000, seed=s))
        res = select_model(sc.X, sc.y, PenaltyConfig(3, 10), MarginConfig())
        covered += set(sc.support) <= set(res.chosen.features)
    assert covered >= SUPPORT_COVER_MIN


def test_single_feature_table_by_hand():
    X = np.array([[0.3], [-1.2], [0.8], [1.5], [-0.4]])
    y = np.array([1, 2, 1, 2, 1])
    cfg = PenaltyConfig(L=2, d=1)
    m = MarginConfig()
    res = select_model(X, y, cfg, m)
    assert [str(r.subset) for r in res.criterion_table] == ["{}", "{1}"]
    empty, one = res.criterion_table
    assert empty.criterion == pytest.approx(5 * math.log(2), abs=1e-8)
    x, is1 = X[:, 0], (y == 1).astype(float)

    def score(w):  # derivative of the negative log-likelihood in w
        return float(np.sum(x * (1 / (1 + np.exp(-w * x)) - is1)))

    w = min(max(brentq(score, -50, 50, xtol=1e-15), -m.c0), m.c0)
    nll = float(np.sum(np.logaddexp(0, w * x) - is1 * w * x))
    pen = 2 * 1 * 1 + 2 * 1 * (math.log(1) + 1)
    assert one.penalty == pytest.approx(pen, abs=1e-12)
    assert one.criterion == pytest.approx(nll + pen, abs=1e-8)
    assert res.chosen == min(res.criterion_table, key=lambda r: r.criterion).subset


def test_selection_deterministic_and_zero_rows():
    sc = generate_scenario(ScenarioConfig(d=6, d0=2, L=3, n=600, seed=9))
    a = select_model(sc.X, sc.y, PenaltyConfig(3, 6), MarginConfig())
    b = select_model(sc.X, sc.y, PenaltyConfig(3, 6), MarginConfig(), n_jobs=2)
    assert a.chosen == b.chosen
    assert a.criterion_csv() == b.criterion_csv()
    off = [j for j in range(6) if j + 1 not in a.chosen.features]
    assert np.all(a.coefficients.B[off] == 0)
    assert a.coefficients.convention is Convention.REFERENCE_LAST
    assert np.linalg.norm(a.coefficients.B, axis=0).max() <= MarginConfig().c0 + 1e-8


def test_tie_break_prefers_smaller_then_lexicographic():
    # two identical columns: {1} and {2} fit equally well, {1} comes first
    rng = np.random.default_rng(3)
    x = rng.normal(size=(300, 1))
    X = np.hstack([x, x])
    y = np.where(x[:, 0] + 0.3 * rng.normal(size=300) > 0, 1, 2)
    res = select_model(X, y, PenaltyConfig(2, 2), MarginConfig())
    assert res.chosen == ModelSubset((1,))


def test_budget_guard():
    X = np.zeros((100, 25))
    y = np.ones(100, dtype=int)
    y[0] = 2
    with pytest.raises(BudgetExceededError) as info:
        select_model(X, y, PenaltyConfig(2, 25), MarginConfig())
    assert info.value.required == 2**25
    with pytest.raises(BudgetExceededError):
        select_model(np.zeros((4, 3)), [1, 2, 1, 2], PenaltyConfig(3, 3), MarginConfig(), max_size=3)


def test_criterion_csv_format():
    res = select_model(np.array([[1.0], [-1.0], [0.5]]), [1, 2, 1], PenaltyConfig(2, 1), MarginConfig())
    lines = res.criterion_csv().splitlines()
    assert lines[0] == "subset;size;negloglik;penalty;criterion"
    assert lines[1].startswith("{};0;") and lines[2].startswith("{1};1;")
    assert criterion_table_csv(res.criterion_table) == res.criterion_csv()


# --- plug-in classifier --------------------------------------------------------------------


def _result(B):
    C = CoeffMatrix(B)
    feats = tuple(int(j) + 1 for j in np.flatnonzero(np.abs(B).sum(axis=1)))
    return SelectionResult(ModelSubset(feats), C, ())


def test_plugin_empty_model_is_class_one():
    clf = plugin_classifier(_result(np.zeros((3, 4))))
    np.testing.assert_array_equal(clf(np.random.default_rng(0).normal(size=(20, 3))), 1)


def test_plugin_matches_bayes(rng):
    B = np.array([[2.0, 1.0, 0.0], [0.0, 0.0, 0.0], [-1.0, 0.5, 0.0]])
    clf = plugin_classifier(_result(B))
    X = rng.normal(size=(1000, 3))
    np.testing.assert_array_equal(clf(X), bayes_classify(B, X))


def test_plugin_binary_sign_rule():
    clf = plugin_classifier(_result(np.array([[1.5, 0.0]])))
    assert clf([2.0]) == 1 and clf([-2.0]) == 2 and clf([0.0]) == 1


def test_cross_validate_scale_runs():
    sc = generate_scenario(ScenarioConfig(d=4, d0=1, L=2, n=200, seed=1))
    best, errs = cross_validate_scale(sc.X, sc.y, 2, MarginConfig(), [0.5, 2.0], n_folds=3)
    assert best in (0.5, 2.0) and len(errs) == 2
