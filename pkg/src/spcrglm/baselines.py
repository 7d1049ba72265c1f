"""Two-stage PCR baseline and the evaluation metrics (EL, TPR, TNR)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .family import FamilySpec, canonical_link, family_eval, log_likelihood
from .linalg import CenteredDesign, top_right_singular_vectors
from .optimizer import FitResult
from .simulate import SimData, gen_case

__all__ = [
    "LinearPredictor",
    "MetricReport",
    "PcrModel",
    "composite_coefficients",
    "expected_loglik",
    "fit_pcr",
    "loading_support",
    "summarize",
    "tpr_tnr",
]

NONZERO_TOL = 1e-10


@dataclass(frozen=True)
class LinearPredictor:
    """``intercept + ((x - center) / scale) @ coef`` for raw rows ``x``."""

    family: FamilySpec
    intercept: float | NDArray
    coef: NDArray
    center: NDArray
    scale: NDArray | None = None

    def linear_predictor(self, X_raw: ArrayLike) -> NDArray:
        Xc = np.asarray(X_raw, dtype=float) - self.center
        if self.scale is not None:
            Xc = Xc / self.scale
        return self.intercept + Xc @ self.coef

    @classmethod
    def from_fit(cls, res: FitResult, design: CenteredDesign) -> LinearPredictor:
        return cls(res.family, res.params.gamma0, res.params.composite(), design.col_means,
                   design.scale)


@dataclass(frozen=True)
class PcrModel:
    """PCA on the design followed by an unpenalised GLM on the first ``k`` scores."""

    family: FamilySpec
    V: NDArray
    intercept: float
    gamma: NDArray
    deviance_trace: list[float]
    converged: bool

    @property
    def coef(self) -> NDArray:
        return self.V @ self.gamma

    def linear_predictor(self, X: ArrayLike) -> NDArray:
        """Linear predictor for centred rows."""
        return self.intercept + np.asarray(X, dtype=float) @ self.coef


def _deviance(fam: FamilySpec, y: NDArray, kappa: NDArray) -> float:
    return -2.0 * float(np.sum(log_likelihood(fam, y, kappa)))


def fit_pcr(X: ArrayLike, y: ArrayLike, fam: FamilySpec, k: int, max_iter: int = 50,
            tol: float = 1e-8) -> PcrModel:
    """PCR by Newton-Raphson (IRLS) on the leading ``k`` PC scores of centred ``X``.

    Steps that would increase the deviance are halved, so the deviance trace
    is non-increasing.  Hitting ``max_iter`` (e.g. under separation) warns.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if not 0 <= k <= p:
        raise ValueError("need 0 <= k <= p")
    if fam.is_multiclass:
        raise ValueError("PCR baseline supports single-response families only")
    V = top_right_singular_vectors(X, k) if k > 0 else np.zeros((p, 0))
    D = np.column_stack([np.ones(n), X @ V])
    theta = np.zeros(k + 1)
    theta[0] = float(canonical_link(fam, y.mean()))
    dev = _deviance(fam, y, D @ theta)
    trace = [dev]
    converged = False
    for _ in range(max_iter):
        kappa = D @ theta
        _, mu, var = family_eval(fam, kappa)
        var = np.maximum(var, 1e-12)
        step = np.linalg.lstsq(D.T @ (var[:, None] * D), D.T @ (y - mu), rcond=None)[0]
        t = 1.0
        for _ in range(30):
            cand = theta + t * step
            new_dev = _deviance(fam, y, D @ cand)
            if np.isfinite(new_dev) and new_dev <= dev + 1e-12 * abs(dev):
                break
            t *= 0.5
        else:
            cand, new_dev = theta, dev
        theta = cand
        change = abs(dev - new_dev)
        dev = new_dev
        trace.append(dev)
        if change < tol:
            converged = True
            break
    if not converged:
        warnings.warn("PCR IRLS hit the iteration cap (possible separation)", RuntimeWarning,
                      stacklevel=2)
    return PcrModel(fam, V, float(theta[0]), theta[1:], trace, converged)


def pcr_predictor(model: PcrModel, design: CenteredDesign) -> LinearPredictor:
    return LinearPredictor(model.family, model.intercept, model.coef, design.col_means, design.scale)


def composite_coefficients(B: ArrayLike, gamma: ArrayLike) -> NDArray:
    """Coefficients on the original variables, ``B @ gamma``."""
    return np.asarray(B, dtype=float) @ np.asarray(gamma, dtype=float)


def loading_support(B: ArrayLike) -> NDArray:
    """Alternative selection reading: variable used by any loading column."""
    return np.any(np.abs(np.asarray(B, dtype=float)) > NONZERO_TOL, axis=1).astype(float)


def tpr_tnr(zeta_hat: ArrayLike, zeta_true: ArrayLike) -> tuple[float | None, float | None]:
    """True positive and true negative rate of the estimated support.

    A rate whose reference set is empty is returned as ``None``.
    """
    zh = np.abs(np.asarray(zeta_hat, dtype=float)) > NONZERO_TOL
    zt = np.asarray(zeta_true, dtype=float) != 0
    if zh.shape != zt.shape:
        raise ValueError("coefficient vectors differ in length")
    tpr = float(np.sum(zh & zt) / np.sum(zt)) if zt.any() else None
    tnr = float(np.sum(~zh & ~zt) / np.sum(~zt)) if (~zt).any() else None
    return tpr, tnr


def expected_loglik(model, generator: str | Callable[[int, int], SimData], m: int = 1000,
                    seed: int = 0) -> float:
    """Monte Carlo estimate of ``-E[log f(y | x)]`` under the data generator.

    ``model`` needs ``family`` and ``linear_predictor(X_raw)``; ``generator``
    is a case id or a callable ``(n, seed) -> SimData``.
    """
    gen = (lambda n, s: gen_case(generator, n, s)) if isinstance(generator, str) else generator
    data = gen(m, seed)
    kappa = model.linear_predictor(data.X)
    return -float(np.mean(log_likelihood(model.family, data.y, kappa)))


@dataclass(frozen=True)
class MetricReport:
    el_mean: float
    el_sd: float | None
    tpr_mean: float | None
    tpr_sd: float | None
    tnr_mean: float | None
    tnr_sd: float | None
    n_reps: int


def _mean_sd(values) -> tuple[float | None, float | None]:
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return None, None
    return float(v.mean()), (float(v.std(ddof=1)) if v.size > 1 else None)


def summarize(el: list[float], tpr: list[float | None], tnr: list[float | None]) -> MetricReport:
    """Average of per-replication values (and their standard deviations)."""
    em, es = _mean_sd(el)
    pm, ps = _mean_sd(tpr)
    nm, ns = _mean_sd(tnr)
    return MetricReport(em, es, pm, ps, nm, ns, len(el))
