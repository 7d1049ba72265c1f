"""Coordinate descent for sparse principal component regression in GLMs.

The penalised objective is

    L_reg(gamma0, gamma, B) + w * sum_i ||x_i - A B^T x_i||^2
        + lambda_beta * xi * ||B||_F^2 + (1 - xi) * sum_lj lambda_lj |B_lj|
        + lambda_gamma * ||gamma||_1,    subject to A^T A = I_k,

where L_reg is the negative log-likelihood of a canonical-link GLM with
linear predictor ``gamma0 + gamma^T B^T x``.  Each outer iteration replaces
L_reg by its weighted least-squares surrogate ``sum_i omega_i (z_i - kappa_i)^2``
and runs coordinate sweeps over B, gamma, gamma0 followed by a Procrustes
update of A.

Single-response and multiclass fits share one code path: the response block
always has ``G`` columns (``G = 1`` outside the multiclass family).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .family import (
    FamilySpec,
    canonical_link,
    log_likelihood,
    multiclass_working_quantities,
    working_quantities,
)
from .linalg import CenteredDesign, fix_column_signs, procrustes_A, soft_threshold, top_right_singular_vectors

__all__ = [
    "ADAPTIVE_EPS",
    "Controls",
    "FitResult",
    "HyperParams",
    "NumericalFailure",
    "SpcrParams",
    "WorkingState",
    "adaptive_weights",
    "beta_update_terms",
    "coordinate_cycle",
    "fit",
    "fit_adaptive",
    "fit_multiclass",
    "indicator_matrix",
    "init_params",
    "objective_value",
    "update_A",
    "update_beta_entry",
    "update_gamma0",
    "update_gamma_entry",
    "working_state",
]

log = logging.getLogger(__name__)

ADAPTIVE_EPS = 1e-4


class NumericalFailure(ArithmeticError):
    """The exact objective became non-finite during a fit."""


@dataclass(frozen=True)
class HyperParams:
    """Tuning and regularisation parameters.

    ``lambda_entry`` (``p x k``), when given, replaces ``lambda_beta`` in the
    lasso part of the loading penalty; the ridge part always uses
    ``lambda_beta``.
    """

    w: float = 0.01
    xi: float = 0.001
    lambda_beta: float = 0.0
    lambda_gamma: float = 0.0
    q: float = 0.0
    lambda_entry: NDArray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("w must be positive")
        if not 0 <= self.xi < 1:
            raise ValueError("xi must lie in [0, 1)")
        if self.lambda_beta < 0 or self.lambda_gamma < 0 or self.q < 0:
            raise ValueError("penalties and q must be non-negative")
        if self.lambda_entry is not None and np.any(np.asarray(self.lambda_entry) < 0):
            raise ValueError("per-entry penalties must be non-negative")

    def entry_penalties(self, p: int, k: int) -> NDArray:
        if self.lambda_entry is None:
            return np.full((p, k), float(self.lambda_beta))
        lam = np.asarray(self.lambda_entry, dtype=float)
        if lam.shape != (p, k):
            raise ValueError(f"lambda_entry has shape {lam.shape}, expected {(p, k)}")
        return lam

    def replace(self, **changes) -> HyperParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class Controls:
    max_outer: int = 100
    tol: float = 1e-5
    max_cycles_per_outer: int = 1


@dataclass(frozen=True)
class SpcrParams:
    """Model parameters.

    For a single response ``gamma0`` is a float and ``gamma`` a ``k``-vector;
    for the multiclass model they are a ``G``-vector and a ``k x G`` matrix.
    """

    B: NDArray
    A: NDArray
    gamma0: float | NDArray
    gamma: NDArray

    @property
    def k(self) -> int:
        return self.B.shape[1]

    @property
    def multiclass(self) -> bool:
        return np.ndim(self.gamma) == 2

    def linear_predictor(self, X: ArrayLike) -> NDArray:
        """``gamma0 + (X B) gamma`` for centred rows ``X``."""
        return self.gamma0 + (np.asarray(X, dtype=float) @ self.B) @ self.gamma

    def composite(self) -> NDArray:
        """Coefficients induced on the original variables, ``B gamma``."""
        return self.B @ self.gamma


def _as_block(params: SpcrParams) -> tuple[NDArray, NDArray]:
    g0 = np.atleast_1d(np.asarray(params.gamma0, dtype=float)).copy()
    gam = np.asarray(params.gamma, dtype=float)
    gam = gam.reshape(-1, 1).copy() if gam.ndim == 1 else gam.copy()
    return g0, gam


def _from_block(B, A, g0, gam, multiclass: bool) -> SpcrParams:
    if multiclass:
        return SpcrParams(B.copy(), A.copy(), g0.copy(), gam.copy())
    return SpcrParams(B.copy(), A.copy(), float(g0[0]), gam[:, 0].copy())


@dataclass
class FitResult:
    """Outcome of one fit.

    ``objective_trace[0]`` is the objective at the starting point, followed
    by one value per outer iteration.  ``surrogate_trace`` holds, per outer
    iteration, the surrogate objective right after re-linearisation and then
    after every cycle (or after every single update with ``trace_updates``).
    """

    params: SpcrParams
    objective_trace: list[float]
    n_outer: int
    converged: bool
    surrogate_trace: list[list[float]]
    family: FamilySpec
    hyper: HyperParams
    degenerate_A: bool = False

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def linear_predictor(self, X: ArrayLike) -> NDArray:
        return self.params.linear_predictor(X)


def indicator_matrix(labels: ArrayLike, G: int | None = None) -> tuple[NDArray, NDArray]:
    """One-hot ``n x G`` matrix from class labels plus the sorted level set."""
    labels = np.asarray(labels)
    levels = np.unique(labels)
    if G is not None and levels.size > G:
        raise ValueError("more distinct labels than classes")
    Y = (labels[:, None] == levels[None, :]).astype(float)
    return Y, levels


def _penalty(B, gam, hyper: HyperParams) -> float:
    lam = hyper.entry_penalties(*B.shape)
    return (hyper.lambda_beta * hyper.xi * float(np.sum(B**2))
            + (1 - hyper.xi) * float(np.sum(lam * np.abs(B)))
            + hyper.lambda_gamma * float(np.sum(np.abs(gam))))


def pca_loss(X: NDArray, A: NDArray, B: NDArray) -> float:
    """``sum_i ||x_i - A B^T x_i||^2``."""
    R = X - (X @ B) @ A.T
    return float(np.sum(R * R))


def objective_value(params: SpcrParams, X: ArrayLike, y: ArrayLike, fam: FamilySpec,
                    hyper: HyperParams) -> float:
    """Exact penalised objective (no surrogate)."""
    X = np.asarray(X, dtype=float)
    kappa = params.linear_predictor(X)
    reg = -float(np.sum(log_likelihood(fam, y, kappa)))
    return reg + hyper.w * pca_loss(X, params.A, params.B) + _penalty(params.B, params.gamma, hyper)


class WorkingState:
    """Parameters plus the caches the coordinate updates read.

    Holds the IRLS weights ``omega`` and working responses ``z`` (``n x G``),
    the PC scores ``X B``, the projections ``X A`` and the working residual
    ``z - kappa``.  Coordinate updates keep the caches in sync incrementally;
    :meth:`refresh` recomputes them from scratch.
    """

    def __init__(self, X: NDArray, omega: NDArray, z: NDArray, params: SpcrParams,
                 hyper: HyperParams, gram: NDArray | None = None):
        self.X = np.asarray(X, dtype=float)
        self.omega = np.ascontiguousarray(np.asarray(omega, dtype=float).reshape(X.shape[0], -1))
        self.z = np.asarray(z, dtype=float).reshape(X.shape[0], -1).copy()
        self.multiclass = params.multiclass
        self.B = np.array(params.B, dtype=float)
        self.A = np.array(params.A, dtype=float)
        self.gamma0, self.gamma = _as_block(params)
        self.hyper = hyper
        self.lam_entry = np.ascontiguousarray(hyper.entry_penalties(*self.B.shape))
        self.gram = self.X.T @ self.X if gram is None else gram
        self.colsq = np.ascontiguousarray(np.diag(self.gram).copy())
        self.degenerate_A = False
        self.refresh()

    def refresh(self) -> None:
        self.scores = self.X @ self.B
        self.XA = self.X @ self.A
        self.resid = self.z - self.gamma0 - self.scores @ self.gamma

    @property
    def params(self) -> SpcrParams:
        return _from_block(self.B, self.A, self.gamma0, self.gamma, self.multiclass)

    def partial_residual(self, l: int, j: int, g: int = 0) -> NDArray:
        """``Z_i``: working response minus every term except ``gamma_j B_lj x_il``."""
        return self.resid[:, g] + self.gamma[j, g] * self.B[l, j] * self.X[:, l]

    def pca_partial_residual(self, l: int, j: int) -> NDArray:
        """``Y*_{ji} = (X alpha_j)_i - sum_{m != l} B_mj x_im``."""
        return self.XA[:, j] - self.scores[:, j] + self.B[l, j] * self.X[:, l]

    def score_partial_residual(self, j: int, g: int = 0) -> NDArray:
        """``y**_i = z_i - gamma0 - sum_{m != j} gamma_m x*_im``."""
        return self.resid[:, g] + self.gamma[j, g] * self.scores[:, j]

    def surrogate(self) -> float:
        """Weighted least-squares surrogate plus PCA loss and penalties."""
        return (float(np.sum(self.omega * self.resid**2))
                + self.hyper.w * pca_loss(self.X, self.A, self.B)
                + _penalty(self.B, self.gamma, self.hyper))

    def beta_restriction(self, l: int, j: int):
        """Surrogate-plus-penalty as a function of ``B_lj`` alone (up to a constant)."""
        h = self.hyper
        x = self.X[:, l]
        Z = [self.partial_residual(l, j, g) for g in range(self.gamma.shape[1])]
        Ystar = self.pca_partial_residual(l, j)
        lam = self.lam_entry[l, j]

        def f(b):
            b = np.asarray(b, dtype=float)[..., None]
            val = np.zeros(b.shape[:-1])
            for g, Zg in enumerate(Z):
                val = val + np.sum(self.omega[:, g] * (Zg - self.gamma[j, g] * b * x) ** 2, axis=-1)
            val = val + h.w * np.sum((Ystar - b * x) ** 2, axis=-1)
            b = b[..., 0]
            return val + h.lambda_beta * h.xi * b**2 + (1 - h.xi) * lam * np.abs(b)
        return f

    def gamma_restriction(self, j: int, g: int = 0):
        ystar = self.score_partial_residual(j, g)
        s = self.scores[:, j]
        om = self.omega[:, g]
        lam = self.hyper.lambda_gamma

        def f(c):
            c = np.asarray(c, dtype=float)[..., None]
            return np.sum(om * (ystar - c * s) ** 2, axis=-1) + lam * np.abs(c[..., 0])
        return f

    def gamma0_restriction(self, g: int = 0):
        r = self.resid[:, g] + self.gamma0[g]
        om = self.omega[:, g]

        def f(c):
            c = np.asarray(c, dtype=float)[..., None]
            return np.sum(om * (r - c) ** 2, axis=-1)
        return f


def beta_update_terms(state: WorkingState, l: int, j: int) -> tuple[float, float]:
    """Numerator (before soft-thresholding) and denominator of the ``B_lj`` update."""
    h = state.hyper
    x = state.X[:, l]
    Ystar = state.pca_partial_residual(l, j)
    num = 2 * h.w * float(x @ Ystar)
    den = 2 * h.w * float(x @ x) + 2 * h.lambda_beta * h.xi
    for g in range(state.gamma.shape[1]):
        c = state.gamma[j, g]
        om = state.omega[:, g]
        Z = state.partial_residual(l, j, g)
        num += float(np.sum(x * 2 * om * Z * c))
        den += 2 * c**2 * float(np.sum(om * x**2))
    return num, den


def update_beta_entry(state: WorkingState, l: int, j: int) -> float:
    """Exact coordinate minimiser for ``B_lj``; caches are updated in place."""
    x = state.X[:, l]
    num, den = beta_update_terms(state, l, j)
    new = soft_threshold(num, (1 - state.hyper.xi) * state.lam_entry[l, j]) / den if den > 0 else 0.0
    d = new - state.B[l, j]
    if d != 0.0:
        state.B[l, j] = new
        state.scores[:, j] += d * x
        state.resid -= np.outer(d * x, state.gamma[j])
    return float(new)


def update_gamma_entry(state: WorkingState, j: int, g: int = 0) -> float:
    """Exact coordinate minimiser for ``gamma_j`` (class ``g``)."""
    s = state.scores[:, j]
    om = state.omega[:, g]
    den = 2 * float(np.sum(om * s**2))
    if not np.any(state.B[:, j]) or den <= 0:
        new = 0.0
    else:
        ystar = state.score_partial_residual(j, g)
        new = soft_threshold(2 * float(np.sum(om * ystar * s)), state.hyper.lambda_gamma) / den
    d = new - state.gamma[j, g]
    if d != 0.0:
        state.gamma[j, g] = new
        state.resid[:, g] -= d * s
    return float(new)


def update_gamma0(state: WorkingState, g: int = 0) -> float:
    """Weighted mean of the working response net of the component terms."""
    om = state.omega[:, g]
    target = state.z[:, g] - state.scores @ state.gamma[:, g]
    new = float(np.sum(om * target) / np.sum(om))
    state.resid[:, g] -= new - state.gamma0[g]
    state.gamma0[g] = new
    return new


def update_A(state: WorkingState) -> NDArray:
    """Procrustes step for ``A`` given ``B``."""
    A, degenerate = procrustes_A(None, state.B, gram=state.gram)
    state.A = A
    state.XA = state.X @ A
    state.degenerate_A = degenerate
    return A


def coordinate_cycle(state: WorkingState, engine: str = "jit", record=None) -> None:
    """One sweep: all ``B`` entries column-major, all ``gamma``, ``gamma0``, then ``A``.

    ``record``, if given, is called after every single update (python engine
    only) and is how the fine-grained monotonicity checks observe the sweep.
    """
    if engine == "jit":
        h = state.hyper
        GB = state.gram @ state.B
        GA = state.gram @ state.A
        _kernels.beta_sweep(state.X, state.gram, state.colsq, state.omega, state.resid,
                            state.scores, state.B, GB, GA, state.gamma, state.lam_entry,
                            float(h.lambda_beta), float(h.xi), float(h.w))
        _kernels.gamma_sweep(state.B, state.omega, state.resid, state.scores, state.gamma,
                             float(h.lambda_gamma))
        _kernels.intercept_sweep(state.omega, state.resid, state.gamma0)
        update_A(state)
        return
    if engine != "python":
        raise ValueError(f"unknown engine {engine!r}")
    p, k = state.B.shape
    G = state.gamma.shape[1]
    for j in range(k):
        for l in range(p):
            update_beta_entry(state, l, j)
            if record:
                record()
    for g in range(G):
        for j in range(k):
            update_gamma_entry(state, j, g)
            if record:
                record()
    for g in range(G):
        update_gamma0(state, g)
        if record:
            record()
    update_A(state)
    if record:
        record()


def _design(X) -> NDArray:
    if isinstance(X, CenteredDesign):
        X = X.X
    X = np.asarray(X, dtype=float)
    scale = np.abs(X).max(initial=1.0)
    if np.any(np.abs(X.mean(axis=0)) > 1e-8 * scale):
        raise ValueError("design columns must be centred (see center_columns)")
    return X


def init_params(X, y: ArrayLike, fam: FamilySpec, k: int) -> SpcrParams:
    """PCA warm start: ``B = A =`` top-k right singular vectors, ``gamma = 0``,
    ``gamma0`` = null-model intercept."""
    X = _design(X)
    n, p = X.shape
    if not 1 <= k <= p:
        raise ValueError(f"need 1 <= k <= p, got k={k}, p={p}")
    if not np.any(X):
        raise ValueError("design has no variance in any column")
    B = top_right_singular_vectors(X, k)
    y = np.asarray(y, dtype=float)
    if fam.is_multiclass:
        freq = y.mean(axis=0)
        if np.any(freq == 0):
            raise ValueError("every class needs at least one observation")
        g0 = np.log(freq)
        g0 = g0 - np.median(g0)
        return SpcrParams(B, B.copy(), g0, np.zeros((k, y.shape[1])))
    return SpcrParams(B, B.copy(), float(canonical_link(fam, y.mean())), np.zeros(k))


def working_state(X, y, fam: FamilySpec, params: SpcrParams, hyper: HyperParams) -> WorkingState:
    """Linearise the likelihood at ``params`` and build the coordinate-descent state."""
    X = np.asarray(X, dtype=float)
    omega, z = _working(fam, np.asarray(y, dtype=float), params.linear_predictor(X))
    return WorkingState(X, omega, z, params, hyper)


def _working(fam: FamilySpec, y: NDArray, kappa: NDArray):
    if fam.is_multiclass:
        return multiclass_working_quantities(y, kappa)
    return working_quantities(fam, y, kappa)


def _orient(B, A, gam):
    """Apply the column sign convention to ``B`` and carry it to ``A`` and ``gamma``."""
    Bs = fix_column_signs(B)
    flip = np.where(np.sum(Bs * B, axis=0) < 0, -1.0, 1.0)
    return B * flip, A * flip, gam * flip[:, None]


def _center_multiclass(g0: NDArray, gam: NDArray) -> None:
    gam -= np.median(gam, axis=1, keepdims=True)
    g0 -= g0.mean()


def _check_y(fam: FamilySpec, y: NDArray, n: int) -> NDArray:
    y = np.asarray(y, dtype=float)
    if fam.is_multiclass:
        if y.ndim != 2 or y.shape[0] != n or y.shape[1] != fam.G:
            raise ValueError(f"multiclass response must be an n x {fam.G} indicator matrix")
        if not np.all((y == 0) | (y == 1)) or not np.all(y.sum(axis=1) == 1):
            raise ValueError("indicator rows must be one-hot")
        if np.any(y.sum(axis=0) == 0):
            raise ValueError("every class needs at least one observation")
    elif y.shape != (n,):
        raise ValueError("response length does not match the design")
    log_likelihood(fam, y, np.zeros_like(y))  # validates the support
    return y


def fit(X, y: ArrayLike, fam: FamilySpec, hyper: HyperParams, k: int,
        controls: Controls = Controls(), init: SpcrParams | None = None,
        engine: str = "jit", trace_updates: bool = False) -> FitResult:
    """Fit SPCR-glm by IRLS re-linearisation and coordinate descent."""
    X = _design(X)
    n, p = X.shape
    y = _check_y(fam, y, n)
    params = init if init is not None else init_params(X, y, fam, k)
    if params.B.shape != (p, k):
        raise ValueError("initial loadings have the wrong shape")
    multiclass = fam.is_multiclass
    if engine == "jit" and not trace_updates:
        params, objective_trace, surrogate_trace, t, converged, degenerate = _fit_jit(
            X, y, fam, hyper, params, controls)
    else:
        params, objective_trace, surrogate_trace, t, converged, degenerate = _fit_python(
            X, y, fam, hyper, params, controls, engine, trace_updates)
    B, A, gam = _orient(params.B, params.A, np.asarray(params.gamma).reshape(k, -1))
    g0 = np.atleast_1d(np.asarray(params.gamma0, dtype=float))
    params = _from_block(B, A, g0, gam, multiclass)
    if not converged:
        log.debug("no convergence after %d outer iterations", t)
    return FitResult(params, objective_trace, t, converged, surrogate_trace, fam, hyper, degenerate)


_FAMILY_CODES = {"gaussian": _kernels.GAUSSIAN, "binomial": _kernels.BINOMIAL,
                 "poisson": _kernels.POISSON, "multiclass": _kernels.BINOMIAL}


def _fit_jit(X, y, fam, hyper, params, controls):
    n, p = X.shape
    k = params.B.shape[1]
    B = np.array(params.B, dtype=float, order="C")
    A = np.array(params.A, dtype=float, order="C")
    g0, gam = _as_block(params)
    Y = np.ascontiguousarray(y.reshape(n, -1))
    obj_trace = np.full(controls.max_outer + 1, np.nan)
    sur_trace = np.full((controls.max_outer, controls.max_cycles_per_outer + 1), np.nan)
    t, converged, degenerate, failed = _kernels.fit_loop(
        _FAMILY_CODES[fam.kind], float(fam.phi), X, Y, B, A, g0, gam,
        np.ascontiguousarray(hyper.entry_penalties(p, k)), float(hyper.lambda_beta),
        float(hyper.xi), float(hyper.w), float(hyper.lambda_gamma),
        int(controls.max_outer), float(controls.tol), int(controls.max_cycles_per_outer),
        fam.is_multiclass, obj_trace, sur_trace)
    params = _from_block(B, A, g0, gam, fam.is_multiclass)
    if failed:
        raise NumericalFailure(
            f"objective became non-finite at outer iteration {t} "
            f"(max |linear predictor| = {np.max(np.abs(params.linear_predictor(X))):.3g})")
    return (params, [float(v) for v in obj_trace[:t + 1]], [list(map(float, row)) for row in sur_trace[:t]],
            int(t), bool(converged), bool(degenerate))


def _fit_python(X, y, fam, hyper, params, controls, engine, trace_updates):
    gram = X.T @ X
    obj = objective_value(params, X, y, fam, hyper)
    objective_trace = [obj]
    surrogate_trace: list[list[float]] = []
    converged = False
    degenerate = False
    t = 0
    for t in range(1, controls.max_outer + 1):
        kappa = params.linear_predictor(X)
        omega, z = _working(fam, y, kappa)
        state = WorkingState(X, omega, z, params, hyper, gram)
        sur = [state.surrogate()]
        record = (lambda: sur.append(state.surrogate())) if trace_updates else None
        for _ in range(controls.max_cycles_per_outer):
            coordinate_cycle(state, engine if engine != "jit" else "python", record)
            if not trace_updates:
                sur.append(state.surrogate())
            state.refresh()
        surrogate_trace.append(sur)
        degenerate = state.degenerate_A
        if fam.is_multiclass:
            _center_multiclass(state.gamma0, state.gamma)
        params = state.params
        prev, obj = obj, objective_value(params, X, y, fam, hyper)
        objective_trace.append(obj)
        if not np.isfinite(obj):
            raise NumericalFailure(
                f"objective became non-finite at outer iteration {t} "
                f"(max |linear predictor| = {np.max(np.abs(params.linear_predictor(X))):.3g})")
        if abs(obj - prev) / (abs(prev) + 1e-10) < controls.tol:
            converged = True
            break
    return params, objective_trace, surrogate_trace, t, converged, degenerate


def fit_multiclass(X, Y: ArrayLike, hyper: HyperParams, k: int,
                   controls: Controls = Controls(), init: SpcrParams | None = None,
                   engine: str = "jit") -> FitResult:
    """Symmetric multiclass model; ``Y`` is the ``n x G`` indicator matrix."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise ValueError("Y must be an n x G indicator matrix with G >= 2")
    return fit(X, Y, FamilySpec.multiclass(Y.shape[1]), hyper, k, controls, init, engine)


def adaptive_weights(B_pilot: ArrayLike, lambda_beta: float, q: float,
                     eps: float = ADAPTIVE_EPS) -> NDArray:
    """``lambda_beta / max(|B_pilot|, eps)^q``."""
    return lambda_beta / np.maximum(np.abs(np.asarray(B_pilot, dtype=float)), eps) ** q


def fit_adaptive(X, y: ArrayLike, fam: FamilySpec, hyper: HyperParams, k: int,
                 controls: Controls = Controls(), pilot: FitResult | None = None,
                 engine: str = "jit") -> FitResult:
    """Two-stage adaptive fit.

    The pilot (plain fit with the same ``lambda_beta``) supplies the loadings
    that set per-entry penalties for the second stage.  Pass ``pilot`` to
    reuse an existing fit, e.g. one chosen by cross-validation.
    """
    if pilot is None:
        pilot = fit(X, y, fam, hyper.replace(lambda_entry=None), k, controls, engine=engine)
    lam = adaptive_weights(pilot.params.B, hyper.lambda_beta, hyper.q)
    return fit(X, y, fam, hyper.replace(lambda_entry=lam), k, controls, engine=engine)
