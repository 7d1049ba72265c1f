"""Seeded data generators for the four simulation cases and the
four-cluster illustrative example.

All randomness comes from numpy's Philox counter-based bit generator keyed
by the integer seed, so a ``(case, n, seed)`` triple always reproduces the
same data.  Multivariate normals are drawn as ``Z L^T`` with ``L`` the lower
Cholesky factor of the covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import block_diag

__all__ = [
    "CASES",
    "NU1",
    "NU2",
    "SimData",
    "SimTruth",
    "ar_covariance",
    "case_covariance",
    "gen_case",
    "gen_illustrative",
    "make_rng",
    "replication_seed",
]

NU1 = np.array([-1, 0, 1, 1, 0, -1, -1, 0, 1], dtype=float)
NU2 = np.array([1, 0, -1, -1, 0, 1], dtype=float)

CENTERS = np.array([[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]])


@dataclass(frozen=True)
class CaseDef:
    family: str
    p: int
    # (scale, direction) pairs making up the linear predictor
    terms: tuple[tuple[float, int], ...]


CASES = {
    "case1": CaseDef("binomial", 20, ((4.0, 1),)),
    "case2": CaseDef("binomial", 30, ((2.0, 1), (2.0, 2))),
    "case3": CaseDef("poisson", 20, ((0.8, 1),)),
    "case4": CaseDef("poisson", 30, ((0.5, 1), (0.5, 2))),
}


@dataclass(frozen=True)
class SimTruth:
    """Ground truth of a simulated dataset.

    ``coef`` is the true coefficient vector of the linear predictor; its
    support is what TPR/TNR are scored against.
    """

    case_id: str
    family: str
    coef: NDArray
    directions: tuple[NDArray, ...]
    labels: NDArray | None = None
    u: NDArray | None = None

    @property
    def support(self) -> NDArray:
        return self.coef != 0


@dataclass(frozen=True)
class SimData:
    X: NDArray
    y: NDArray
    truth: SimTruth = field(repr=False)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def replication_seed(master: int, rep: int) -> int:
    """Seed of replication ``rep``: the first 63-bit word of Philox keyed by
    ``master`` at counter position ``rep``."""
    bg = np.random.Philox(key=int(master))
    bg.advance(int(rep))
    return int(bg.random_raw() >> 1)


def ar_covariance(rho: float, d: int) -> NDArray:
    """``rho^|i-j|`` correlation matrix."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def case_covariance(p: int) -> NDArray:
    if p == 20:
        return block_diag(ar_covariance(0.9, 9), np.eye(11))
    if p == 30:
        return block_diag(ar_covariance(0.9, 9), ar_covariance(0.9, 6), np.eye(15))
    raise ValueError(f"no simulation design with p={p}")


def _direction(which: int, p: int) -> NDArray:
    v = np.zeros(p)
    if which == 1:
        v[:9] = NU1
    else:
        v[9:15] = NU2
    return v


def _mvnormal(rng, cov: NDArray, n: int) -> NDArray:
    L = np.linalg.cholesky(cov)
    return rng.standard_normal((n, cov.shape[0])) @ L.T


def case_truth(case_id: str) -> SimTruth:
    if case_id not in CASES:
        raise ValueError(f"unknown case {case_id!r}; expected one of {sorted(CASES)}")
    c = CASES[case_id]
    dirs = tuple(_direction(which, c.p) for _, which in c.terms)
    coef = sum(scale * d for (scale, _), d in zip(c.terms, dirs))
    return SimTruth(case_id, c.family, coef, dirs)


def gen_case(case_id: str, n: int, seed: int) -> SimData:
    """Draw ``n`` observations from one of ``case1`` ... ``case4``."""
    truth = case_truth(case_id)
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(seed)
    X = _mvnormal(rng, case_covariance(truth.coef.size), n)
    eta = X @ truth.coef
    if truth.family == "binomial":
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    else:
        y = rng.poisson(np.exp(eta)).astype(float)
    return SimData(X, y, truth)


def gen_illustrative(n: int, seed: int) -> SimData:
    """Four-cluster example in ten dimensions.

    The first two coordinates carry a balanced mixture of four normals
    (sd 0.5) centred at ``(+-2, +-2)``; the remaining eight are AR(0.8)
    normal.  The mixture covariance is isotropic, so the within-block
    rotation is the identity.  The log-odds are ``x_1 + x_2``.
    """
    if n < 8:
        raise ValueError("need n >= 8")
    rng = make_rng(seed)
    labels = rng.integers(0, 4, size=n)
    u = CENTERS[labels] + 0.5 * rng.standard_normal((n, 2))
    v = _mvnormal(rng, ar_covariance(0.8, 8), n)
    X = np.hstack([u, v])
    nu1 = np.zeros(10)
    nu1[1] = 1.0
    nu2 = np.zeros(10)
    nu2[0] = 1.0
    if not np.allclose(np.column_stack([X @ nu2, X @ nu1]), u, atol=1e-10, rtol=0):
        raise AssertionError("cluster coordinates not recovered")
    eta = X @ nu1 + X @ nu2
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    truth = SimTruth("illustrative", "binomial", nu1 + nu2, (nu1, nu2), labels, u)
    return SimData(X, y, truth)
