import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from spcrglm import Controls, FamilySpec, HyperParams, fit
from spcrglm import selection
from spcrglm.baselines import LinearPredictor, expected_loglik
from spcrglm.linalg import center_columns
from spcrglm.optimizer import NumericalFailure
from spcrglm.selection import (
    CvSpec,
    cv_criterion_glm,
    cv_criterion_multiclass,
    cv_from_predictions,
    heldout_predictions,
    lambda_grid,
    make_cv_spec,
    make_folds,
    select_hyperparameters,
)
from spcrglm.simulate import gen_case


def centred(rng, n, p):
    X = rng.normal(size=(n, p))
    return X - X.mean(axis=0)


# ---------------------------------------------------------------- folds

def test_folds_examples():
    assert [len(f) for f in make_folds(10, 5, seed=1)] == [2] * 5
    assert sorted(len(f) for f in make_folds(11, 5, seed=1)) == [2, 2, 2, 2, 3]
    a, b = make_folds(30, 5, seed=9), make_folds(30, 5, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_folds_reject_too_many():
    with pytest.raises(ValueError):
        make_folds(4, 5)


@given(st.integers(2, 200), st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_folds_partition_and_balance(n, K, seed):
    K = min(K, n)
    folds = make_folds(n, K, seed)
    assert len(folds) == K
    np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(n))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1


@given(st.integers(0, 2**32 - 1))
def test_stratified_folds(seed):
    labels = np.repeat([0, 1, 2], [10, 15, 25])
    folds = make_folds(50, 5, seed, labels=labels)
    np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(50))
    for f in folds:
        counts = np.bincount(labels[f], minlength=3)
        assert np.all(np.abs(counts - [2, 3, 5]) <= 1)
    assert max(map(len, folds)) - min(map(len, folds)) <= 1


# ---------------------------------------------------------------- grids

def test_grid_all_zero_design():
    g = lambda_grid(np.zeros((10, 3)), np.zeros(10), FamilySpec.gaussian(), 1)
    assert g.degenerate
    np.testing.assert_array_equal(g.beta, [0.0])
    np.testing.assert_array_equal(g.gamma, [0.0])


def test_grid_shape():
    rng = np.random.default_rng(0)
    X = centred(rng, 40, 5)
    y = (X[:, 0] > 0).astype(float)
    g = lambda_grid(X, y, FamilySpec.binomial(), 2)
    for grid in (g.beta, g.gamma):
        assert grid.size == 10
        assert np.all(np.diff(grid) < 0)
        assert grid[-1] / grid[0] == pytest.approx(1e-3)


@pytest.mark.parametrize("fam", [FamilySpec.gaussian(), FamilySpec.binomial(), FamilySpec.poisson()],
                         ids=lambda f: f.kind)
def test_grid_maxima_from_formula(fam):
    rng = np.random.default_rng(1)
    X = centred(rng, 50, 4)
    y = {"gaussian": rng.normal(size=50), "binomial": rng.integers(0, 2, 50).astype(float),
         "poisson": rng.poisson(2, 50).astype(float)}[fam.kind]
    hyper = HyperParams(w=0.05, xi=0.1)
    g = lambda_grid(X, y, fam, 2, hyper=hyper)
    V = np.linalg.svd(X)[2][:2].T
    V *= np.sign(V[np.argmax(np.abs(V), axis=0), [0, 1]])
    mu = y.mean()
    if fam.kind == "gaussian":
        omega, z = np.full(50, 0.5), y
    else:
        kappa = np.log(mu / (1 - mu)) if fam.kind == "binomial" else np.log(mu)
        var = mu * (1 - mu) if fam.kind == "binomial" else mu
        omega, z = np.full(50, var / 2), kappa + (y - mu) / var
    assert g.gamma[0] == pytest.approx(np.max(np.abs((2 * omega * z) @ X @ V)), rel=1e-10)
    # with gamma = 0 and A = B the loading numerator is 2 w B_lj ||x_l||^2
    expected_beta = np.max(np.abs(2 * hyper.w * V * np.sum(X**2, axis=0)[:, None])) / (1 - hyper.xi)
    assert g.beta[0] == pytest.approx(expected_beta, rel=1e-10)
    g2 = lambda_grid(2 * X, y, fam, 2, hyper=hyper)
    assert g2.beta[0] / g.beta[0] == pytest.approx(4.0, rel=1e-10)
    assert g2.gamma[0] / g.gamma[0] == pytest.approx(2.0, rel=1e-10)


# ---------------------------------------------------------------- criteria

def _null_hyper():
    return HyperParams(lambda_gamma=1e9)


def test_null_model_cv_is_log_two_per_observation():
    rng = np.random.default_rng(2)
    X = centred(rng, 100, 4)
    y = np.tile([0.0, 1.0], 50)
    cv = CvSpec(5, make_folds(100, 5, 3, labels=y), np.zeros(1), np.zeros(1))
    val = cv_criterion_glm(X, y, FamilySpec.binomial(), _null_hyper(), 1, cv)
    assert val >= 0
    assert val == pytest.approx(100 / 5 * np.log(2), rel=0.02)


def test_balanced_multiclass_null_cv():
    rng = np.random.default_rng(3)
    X = centred(rng, 90, 4)
    Y = np.eye(3)[np.arange(90) % 3]
    cv = CvSpec(5, make_folds(90, 5, 0, labels=Y), np.zeros(1), np.zeros(1))
    val = cv_criterion_multiclass(X, Y, _null_hyper(), 1, cv)
    assert val == pytest.approx(90 / 5 * 3 * np.log(2), rel=0.02)


@pytest.mark.parametrize("fam", [FamilySpec.gaussian(), FamilySpec.binomial(), FamilySpec.poisson()],
                         ids=lambda f: f.kind)
def test_cv_matches_naive_heldout_sum(fam):
    rng = np.random.default_rng(4)
    raw = rng.normal(size=(20, 3)) + 5
    y = {"gaussian": raw[:, 0] + rng.normal(size=20), "binomial": (raw[:, 0] > 5).astype(float),
         "poisson": rng.poisson(np.exp(0.3 * (raw[:, 0] - 5))).astype(float)}[fam.kind]
    hyper = HyperParams(lambda_beta=0.1, lambda_gamma=0.2)
    folds = make_folds(20, 4, seed=5)
    cv = CvSpec(4, folds, np.zeros(1), np.zeros(1))
    total = 0.0
    for test in folds:
        train = np.setdiff1d(np.arange(20), test)
        mean = raw[train].mean(axis=0)
        res = fit(raw[train] - mean, y[train], fam, hyper, 2)
        kappa = res.params.gamma0 + (raw[test] - mean) @ res.params.B @ res.params.gamma
        if fam.kind == "gaussian":
            resid = y[train] - res.params.gamma0 - (raw[train] - mean) @ res.params.B @ res.params.gamma
            ll = stats.norm.logpdf(y[test], kappa, np.sqrt(np.mean(resid**2)))
        elif fam.kind == "binomial":
            ll = stats.bernoulli.logpmf(y[test], 1 / (1 + np.exp(-kappa)))
        else:
            ll = stats.poisson.logpmf(y[test], np.exp(kappa))
        total += ll.sum()
    assert cv_criterion_glm(raw, y, fam, hyper, 2, cv) == pytest.approx(-total / 4, rel=1e-10, abs=1e-10)


def test_two_class_criterion_doubles_binomial():
    rng = np.random.default_rng(6)
    y = rng.integers(0, 2, 30).astype(float)
    kappa = rng.normal(size=30)
    binom = cv_from_predictions(FamilySpec.binomial(), y, kappa, np.ones(30), 5)
    multi = cv_from_predictions(FamilySpec.multiclass(2), np.column_stack([y, 1 - y]),
                                np.column_stack([kappa, -kappa]), np.ones(30), 5)
    assert multi == pytest.approx(2 * binom, rel=1e-12)


def test_two_class_fit_matches_binomial_with_halved_weights():
    """The symmetric two-class objective is twice a binomial objective with
    ``w`` and ``lambda_beta`` halved, so the criteria agree up to that doubling."""
    rng = np.random.default_rng(7)
    X = centred(rng, 60, 4)
    y = (X[:, 0] + rng.normal(size=60) > 0).astype(float)
    Y = np.column_stack([y, 1 - y])
    folds = make_folds(60, 5, seed=8)
    cv = CvSpec(5, folds, np.zeros(1), np.zeros(1))
    ctl = Controls(max_outer=5000, tol=1e-13)
    multi = cv_criterion_multiclass(X, Y, HyperParams(w=0.2, lambda_beta=0.4, lambda_gamma=0.3), 1, cv, ctl)
    binom = cv_criterion_glm(X, y, FamilySpec.binomial(),
                             HyperParams(w=0.1, lambda_beta=0.2, lambda_gamma=0.3), 1, cv, ctl)
    assert multi == pytest.approx(2 * binom, rel=1e-5)


def test_cv_deterministic():
    rng = np.random.default_rng(9)
    X = centred(rng, 40, 3)
    Y = np.eye(3)[rng.integers(0, 3, 40)]
    fam = FamilySpec.multiclass(3)
    a = make_cv_spec(X, Y, fam, 1, seed=4, n_points=3)
    b = make_cv_spec(X, Y, fam, 1, seed=4, n_points=3)
    assert all(np.array_equal(x, y) for x, y in zip(a.folds, b.folds))
    h = HyperParams(lambda_beta=0.1, lambda_gamma=0.1)
    assert cv_criterion_multiclass(X, Y, h, 1, a) == cv_criterion_multiclass(X, Y, h, 1, b)


# ---------------------------------------------------------------- selection

@pytest.fixture(scope="module")
def small_problem():
    data = gen_case("case1", 80, seed=11)
    D = center_columns(data.X)
    return D.X, data.y


def test_single_point_grid(small_problem):
    X, y = small_problem
    cv = CvSpec(5, make_folds(80, 5, 0), np.array([0.3]), np.array([0.7]))
    res = select_hyperparameters(X, y, FamilySpec.binomial(), 1, cv)
    assert res.best == (0.3, 0.7)
    assert res.refit.hyper.lambda_beta == 0.3


def test_best_is_surface_minimum_and_recomputable(small_problem):
    X, y = small_problem
    fam = FamilySpec.binomial()
    cv = make_cv_spec(X, y, fam, 1, n_points=4)
    res = select_hyperparameters(X, y, fam, 1, cv)
    a, b = res.best_index
    assert res.cv_surface[a, b] == np.min(res.cv_surface)
    assert res.best == (res.cv.grid_beta[a], res.cv.grid_gamma[b])
    recomputed = cv_from_predictions(fam, y, res.heldout[a, b], res.phi[a, b], 5)
    assert recomputed == pytest.approx(res.cv_surface[a, b], abs=1e-10)
    # every grid point reuses the same folds
    h = HyperParams(lambda_beta=res.cv.grid_beta[1], lambda_gamma=res.cv.grid_gamma[2])
    kappa, _ = heldout_predictions(X, y, fam, h, 1, cv.folds)
    np.testing.assert_array_equal(kappa, res.heldout[1, 2])


def test_ties_go_to_larger_penalties(small_problem):
    X, y = small_problem
    # gamma is zero at every point, so the surface is flat
    cv = CvSpec(5, make_folds(80, 5, 0), np.array([1e7, 1e8]), np.array([1e8, 1e9]))
    res = select_hyperparameters(X, y, FamilySpec.binomial(), 1, cv)
    assert np.ptp(res.cv_surface) == 0
    assert res.best == (1e8, 1e9)


def test_failed_fold_scores_infinity(small_problem, monkeypatch):
    X, y = small_problem
    real_fit = selection.fit

    def flaky(X, y, fam, hyper, k, controls=Controls()):
        if hyper.lambda_beta == 0.5:
            raise NumericalFailure("forced")
        return real_fit(X, y, fam, hyper, k, controls)

    monkeypatch.setattr(selection, "fit", flaky)
    cv = CvSpec(5, make_folds(80, 5, 0), np.array([0.5, 0.1]), np.array([1.0]))
    res = select_hyperparameters(X, y, FamilySpec.binomial(), 1, cv)
    assert res.cv_surface[0, 0] == np.inf
    assert res.failed == [(0, 0, 0)]
    assert res.best == (0.1, 1.0)


@pytest.mark.slow
def test_selected_model_beats_null_corner():
    wins = 0
    fam = FamilySpec.binomial()
    for seed in range(20):
        data = gen_case("case1", 200, seed)
        D = center_columns(data.X)
        cv = make_cv_spec(D.X, data.y, fam, 1, seed=seed)
        res = select_hyperparameters(D.X, data.y, fam, 1, cv)
        corner = fit(D.X, data.y, fam, HyperParams(lambda_beta=cv.grid_beta[0], lambda_gamma=cv.grid_gamma[0]), 1)
        el_best = expected_loglik(LinearPredictor.from_fit(res.refit, D), "case1", seed=10_000 + seed)
        el_corner = expected_loglik(LinearPredictor.from_fit(corner, D), "case1", seed=10_000 + seed)
        wins += el_best < el_corner
    assert wins >= 16
