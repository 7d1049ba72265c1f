"""K-fold cross-validation over (lambda_beta, lambda_gamma) grids.

``w`` and ``xi`` are held fixed; only the two regularisation parameters are
searched.  Folds are drawn once and shared by every grid point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._parallel import pmap
from .family import FamilySpec, log_likelihood
from .linalg import center_columns
from .optimizer import (
    Controls,
    FitResult,
    HyperParams,
    NumericalFailure,
    beta_update_terms,
    fit,
    init_params,
    working_state,
)
from .simulate import make_rng

__all__ = [
    "CvResult",
    "CvSpec",
    "FoldFitError",
    "LambdaGrid",
    "cv_criterion",
    "cv_criterion_glm",
    "cv_criterion_multiclass",
    "cv_from_predictions",
    "heldout_predictions",
    "lambda_grid",
    "make_cv_spec",
    "make_folds",
    "select_hyperparameters",
]


class FoldFitError(RuntimeError):
    def __init__(self, fold: int, cause: Exception):
        super().__init__(f"fit on training part of fold {fold} failed: {cause}")
        self.fold = fold
        self.cause = cause


def make_folds(n: int, K: int = 5, seed: int = 0, labels: ArrayLike | None = None) -> list[NDArray]:
    """Random balanced partition of ``range(n)`` into ``K`` folds.

    With ``labels`` (and every class holding at least ``K`` members) the
    partition is stratified: classes are laid out one after another in
    shuffled order and dealt round-robin, so sizes still differ by at most one.
    """
    if not 2 <= K <= n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    rng = make_rng(seed)
    perm = rng.permutation(n)
    if labels is not None:
        labels = np.asarray(labels)
        if labels.ndim == 2:
            labels = labels.argmax(axis=1)
        _, counts = np.unique(labels, return_counts=True)
        if counts.min() >= K:
            order = np.concatenate([perm[labels[perm] == c] for c in np.unique(labels)])
            assign = np.empty(n, dtype=int)
            assign[order] = np.arange(n) % K
            return [np.sort(np.flatnonzero(assign == f)) for f in range(K)]
    return [np.sort(part) for part in np.array_split(perm, K)]


@dataclass(frozen=True)
class LambdaGrid:
    beta: NDArray
    gamma: NDArray
    degenerate: bool = False


def lambda_grid(X: ArrayLike, y: ArrayLike, fam: FamilySpec, k: int, n_points: int = 10,
                hyper: HyperParams = HyperParams(), ratio: float = 1e-3) -> LambdaGrid:
    """Log-spaced descending grids from the largest gradient at the initial point.

    ``lambda_gamma`` starts at ``max_j |sum_i 2 omega_i z_i x*_ij|`` at the
    null model with PCA loadings; ``lambda_beta`` at the largest loading
    update numerator there, divided by ``1 - xi``.  Both grids end at
    ``ratio`` times their maximum.
    """
    if n_points < 2:
        raise ValueError("need at least two grid points")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.any(X):
        return LambdaGrid(np.zeros(1), np.zeros(1), True)
    params = init_params(X, y, fam, k)
    state = working_state(X, y, fam, params, hyper)
    lam_gamma = float(np.max(np.abs((2 * state.omega * state.z).T @ state.scores)))
    p = X.shape[1]
    nums = [abs(beta_update_terms(state, l, j)[0]) for j in range(k) for l in range(p)]
    lam_beta = max(nums) / (1 - hyper.xi)
    steps = np.logspace(0, np.log10(ratio), n_points)
    degenerate = lam_beta == 0 or lam_gamma == 0
    return LambdaGrid(lam_beta * steps, lam_gamma * steps, degenerate)


@dataclass(frozen=True)
class CvSpec:
    K: int
    folds: list[NDArray] = field(repr=False)
    grid_beta: NDArray
    grid_gamma: NDArray
    seed: int = 0

    def __post_init__(self):
        idx = np.sort(np.concatenate(self.folds))
        if idx.size != np.unique(idx).size or not np.array_equal(idx, np.arange(idx.size)):
            raise ValueError("folds must partition range(n)")
        if len(self.folds) != self.K:
            raise ValueError("number of folds does not match K")


def make_cv_spec(X: ArrayLike, y: ArrayLike, fam: FamilySpec, k: int, K: int = 5, seed: int = 0,
                 n_points: int = 10, hyper: HyperParams = HyperParams()) -> CvSpec:
    """Folds plus the default grids for one dataset."""
    y = np.asarray(y)
    folds = make_folds(len(y), K, seed, labels=y if fam.is_multiclass else None)
    grid = lambda_grid(X, y, fam, k, n_points, hyper)
    return CvSpec(K, folds, grid.beta, grid.gamma, seed)


def _fold_fit(X, y, fam, hyper, k, controls, train):
    D = center_columns(X[train])
    res = fit(D.X, y[train], fam, hyper, k, controls)
    return D, res


def heldout_predictions(X: ArrayLike, y: ArrayLike, fam: FamilySpec, hyper: HyperParams, k: int,
                        folds: list[NDArray], controls: Controls = Controls()) -> tuple[NDArray, NDArray]:
    """Held-out linear predictors and the per-observation dispersion estimate.

    Each fold's model is fitted on the remaining folds after re-centring
    them; the held-out rows are centred with the training means.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    kappa = np.empty((n,) + y.shape[1:])
    phi = np.ones(n)
    for f, test in enumerate(folds):
        train = np.setdiff1d(np.arange(n), test)
        try:
            D, res = _fold_fit(X, y, fam, hyper, k, controls, train)
        except (NumericalFailure, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise FoldFitError(f, exc) from exc
        kappa[test] = res.linear_predictor(D.transform(X[test]))
        if fam.kind == "gaussian":
            phi[test] = np.mean((y[train] - res.linear_predictor(D.X)) ** 2)
    return kappa, phi


def cv_from_predictions(fam: FamilySpec, y: ArrayLike, kappa: ArrayLike, phi: ArrayLike, K: int) -> float:
    """``-(1/K)`` times the summed held-out log-likelihood.

    For the multiclass family each class contributes a binary-logistic term.
    """
    y = np.asarray(y, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    if fam.is_multiclass:
        ll = log_likelihood(FamilySpec.binomial(), y, kappa)
        return -float(np.sum(ll)) / K
    if fam.kind == "gaussian":
        phi = np.asarray(phi, dtype=float)
        u = 0.5 * kappa**2
        ll = (y * kappa - u) / phi - y**2 / (2 * phi) - 0.5 * np.log(2 * np.pi * phi)
    else:
        ll = log_likelihood(fam, y, kappa)
    return -float(np.sum(ll)) / K


def cv_criterion(X, y, fam: FamilySpec, hyper: HyperParams, k: int, cv: CvSpec,
                 controls: Controls = Controls()) -> float:
    kappa, phi = heldout_predictions(X, y, fam, hyper, k, cv.folds, controls)
    return cv_from_predictions(fam, y, kappa, phi, cv.K)


def cv_criterion_glm(X, y, fam: FamilySpec, hyper: HyperParams, k: int, cv: CvSpec,
                     controls: Controls = Controls()) -> float:
    if fam.is_multiclass:
        raise ValueError("use cv_criterion_multiclass for the multiclass family")
    return cv_criterion(X, y, fam, hyper, k, cv, controls)


def cv_criterion_multiclass(X, Y, hyper: HyperParams, k: int, cv: CvSpec,
                            controls: Controls = Controls()) -> float:
    Y = np.asarray(Y, dtype=float)
    return cv_criterion(X, Y, FamilySpec.multiclass(Y.shape[1]), hyper, k, cv, controls)


@dataclass
class CvResult:
    """Cross-validation surface, its minimiser, and the full-data refit.

    ``heldout`` keeps every grid point's held-out linear predictors (and
    ``phi`` the matching dispersions) so the surface can be recomputed.
    """

    cv_surface: NDArray
    best: tuple[float, float]
    best_index: tuple[int, int]
    refit: FitResult
    cv: CvSpec
    heldout: NDArray = field(repr=False)
    phi: NDArray = field(repr=False)
    failed: list[tuple[int, int, int]] = field(default_factory=list)


def _grid_task(args, X, y, fam, hyper, k, folds, controls, penalty_factor):
    a, b, lam_b, lam_g = args
    h = hyper.replace(lambda_beta=lam_b, lambda_gamma=lam_g,
                      lambda_entry=None if penalty_factor is None else lam_b * penalty_factor)
    try:
        kappa, phi = heldout_predictions(X, y, fam, h, k, folds, controls)
        return a, b, kappa, phi, None
    except FoldFitError as exc:
        return a, b, None, None, exc.fold


def select_hyperparameters(X: ArrayLike, y: ArrayLike, fam: FamilySpec, k: int, cv: CvSpec,
                           hyper: HyperParams = HyperParams(), controls: Controls = Controls(),
                           penalty_factor: NDArray | None = None,
                           n_jobs: int | None = None) -> CvResult:
    """Evaluate CV at every grid pair, pick the minimiser, refit on all data.

    Ties go to the larger ``lambda_beta``, then the larger ``lambda_gamma``.
    ``penalty_factor`` (``p x k``) turns the fit adaptive: per-entry lasso
    weights are ``lambda_beta * penalty_factor``.  A grid point at which any
    fold fit fails scores ``+inf``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    gb = np.sort(np.asarray(cv.grid_beta, dtype=float))[::-1]
    gg = np.sort(np.asarray(cv.grid_gamma, dtype=float))[::-1]
    if gb.size == 0 or gg.size == 0:
        raise ValueError("empty lambda grid")
    tasks = [(a, b, lb, lg) for a, lb in enumerate(gb) for b, lg in enumerate(gg)]
    work = partial(_grid_task, X=X, y=y, fam=fam, hyper=hyper, k=k, folds=cv.folds,
                   controls=controls, penalty_factor=penalty_factor)
    results = pmap(work, tasks, n_jobs)
    surface = np.full((gb.size, gg.size), np.inf)
    heldout = np.full((gb.size, gg.size) + y.shape, np.nan)
    phi = np.ones((gb.size, gg.size, y.shape[0]))
    failed = []
    for a, b, kappa, ph, bad in results:
        if bad is not None:
            failed.append((a, b, bad))
            continue
        heldout[a, b] = kappa
        phi[a, b] = ph
        surface[a, b] = cv_from_predictions(fam, y, kappa, ph, cv.K)
    if not np.isfinite(surface).any():
        raise RuntimeError("every grid point failed to fit")
    a, b = np.unravel_index(int(np.argmin(surface)), surface.shape)
    best = (float(gb[a]), float(gg[b]))
    h = hyper.replace(lambda_beta=best[0], lambda_gamma=best[1],
                      lambda_entry=None if penalty_factor is None else best[0] * penalty_factor)
    refit = fit(X, y, fam, h, k, controls)
    return CvResult(surface, best, (int(a), int(b)), refit,
                    CvSpec(cv.K, cv.folds, gb, gg, cv.seed), heldout, phi, failed)
