"""Exponential-family definitions with canonical links.

Each family is described by its cumulant function ``u`` and the carrier
term ``v``; the density of a response ``y`` at canonical parameter ``kappa``
is ``exp{(y * kappa - u(kappa)) / phi + v(y, phi)}``.  Everything here is
vectorised over numpy arrays and free of state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit, gammaln, log_expit

__all__ = [
    "DomainError",
    "FamilySpec",
    "OMEGA_MIN",
    "POISSON_KAPPA_CLIP",
    "family_eval",
    "log_likelihood",
    "working_quantities",
    "multiclass_working_quantities",
    "multiclass_probabilities",
    "canonical_link",
    "mean_function",
]

KINDS = ("gaussian", "binomial", "poisson", "multiclass")

# Floor on the surrogate weight u''/(2 phi).
OMEGA_MIN = 1e-5
POISSON_KAPPA_CLIP = 30.0


class DomainError(ValueError):
    """Input outside the support of a family (non-finite predictor, bad response)."""


@dataclass(frozen=True)
class FamilySpec:
    """A canonical-link exponential family.

    Parameters
    ----------
    kind : str
        One of ``gaussian``, ``binomial``, ``poisson``, ``multiclass``.
    phi : float
        Dispersion. Only the gaussian family may use a value other than 1.
    G : int or None
        Number of classes, multiclass only.
    """

    kind: str
    phi: float = 1.0
    G: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown family {self.kind!r}; expected one of {KINDS}")
        if not self.phi > 0:
            raise DomainError("dispersion phi must be positive")
        if self.kind != "gaussian" and self.phi != 1.0:
            raise DomainError(f"phi is fixed at 1 for the {self.kind} family")
        if self.kind == "multiclass":
            if self.G is None or self.G < 2:
                raise DomainError("multiclass family needs G >= 2")
        elif self.G is not None:
            raise DomainError("G is only meaningful for the multiclass family")

    @classmethod
    def gaussian(cls, phi: float = 1.0) -> FamilySpec:
        return cls("gaussian", phi)

    @classmethod
    def binomial(cls) -> FamilySpec:
        return cls("binomial")

    @classmethod
    def poisson(cls) -> FamilySpec:
        return cls("poisson")

    @classmethod
    def multiclass(cls, G: int) -> FamilySpec:
        return cls("multiclass", 1.0, G)

    @classmethod
    def from_name(cls, name: str, phi: float = 1.0, G: int | None = None) -> FamilySpec:
        aliases = {"logistic": "binomial", "logit": "binomial", "poi": "poisson",
                   "normal": "gaussian", "multinomial": "multiclass"}
        kind = aliases.get(name.lower(), name.lower())
        if kind == "gaussian":
            return cls.gaussian(phi)
        if kind == "multiclass":
            return cls.multiclass(G if G is not None else 2)
        return cls(kind)

    @property
    def is_multiclass(self) -> bool:
        return self.kind == "multiclass"


def _check_finite(kappa: NDArray) -> None:
    if not np.all(np.isfinite(kappa)):
        raise DomainError("linear predictor must be finite")


def family_eval(fam: FamilySpec, kappa: ArrayLike) -> tuple[NDArray, NDArray, NDArray]:
    """Cumulant ``u`` and its first two derivatives at ``kappa``.

    The multiclass family is evaluated per class as a binary logistic term.
    """
    kappa = np.asarray(kappa, dtype=float)
    _check_finite(kappa)
    if fam.kind == "gaussian":
        return 0.5 * kappa**2, kappa.copy(), np.ones_like(kappa)
    if fam.kind in ("binomial", "multiclass"):
        # log(1 + e^k) = -log(expit(-k)); stable for large |k|
        u = -log_expit(-kappa)
        mu = expit(kappa)
        return u, mu, mu * expit(-kappa)
    e = np.exp(kappa)
    return e, e, e.copy()


def mean_function(fam: FamilySpec, kappa: ArrayLike) -> NDArray:
    """Inverse canonical link, ``u'(kappa)``."""
    return family_eval(fam, kappa)[1]


def canonical_link(fam: FamilySpec, mu: ArrayLike) -> NDArray:
    """Canonical link of a mean, clipped away from the boundary of the mean space."""
    mu = np.asarray(mu, dtype=float)
    if fam.kind == "gaussian":
        return mu.copy()
    if fam.kind in ("binomial", "multiclass"):
        m = np.clip(mu, 1e-6, 1 - 1e-6)
        return np.log(m / (1 - m))
    return np.log(np.maximum(mu, 1e-6))


def _check_response(fam: FamilySpec, y: NDArray) -> None:
    if not np.all(np.isfinite(y)):
        raise DomainError("response must be finite")
    if fam.kind in ("binomial", "multiclass"):
        if not np.all((y == 0) | (y == 1)):
            raise DomainError(f"{fam.kind} response must be 0/1")
    elif fam.kind == "poisson":
        if np.any(y < 0) or not np.all(y == np.floor(y)):
            raise DomainError("poisson response must be a non-negative integer")


def log_likelihood(fam: FamilySpec, y: ArrayLike, kappa: ArrayLike) -> NDArray:
    """Pointwise log density ``(y kappa - u(kappa))/phi + v(y, phi)``."""
    y = np.asarray(y, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    _check_response(fam, y)
    u, _, _ = family_eval(fam, kappa)
    ll = (y * kappa - u) / fam.phi
    if fam.kind == "gaussian":
        ll = ll - y**2 / (2 * fam.phi) - 0.5 * np.log(2 * np.pi * fam.phi)
    elif fam.kind == "poisson":
        ll = ll - gammaln(y + 1)
    return ll


def working_quantities(fam: FamilySpec, y: ArrayLike, kappa: ArrayLike) -> tuple[NDArray, NDArray]:
    """IRLS weight and working response at the current linear predictor.

    Returns ``omega = u''/(2 phi)`` floored at :data:`OMEGA_MIN` and
    ``z = kappa + (y - u') / u''`` with ``u''`` floored at ``2 phi OMEGA_MIN``.
    For the poisson family the predictor is first clipped to
    ``[-POISSON_KAPPA_CLIP, POISSON_KAPPA_CLIP]``.
    """
    y = np.asarray(y, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    _check_finite(kappa)
    if fam.kind == "gaussian":
        return np.full(np.broadcast(y, kappa).shape, 1.0 / (2 * fam.phi)), y + 0.0 * kappa
    if fam.kind == "poisson":
        kappa = np.clip(kappa, -POISSON_KAPPA_CLIP, POISSON_KAPPA_CLIP)
    _, d1, d2 = family_eval(fam, kappa)
    floor = 2 * fam.phi * OMEGA_MIN
    d2f = np.maximum(d2, floor)
    return d2f / (2 * fam.phi), kappa + (y - d1) / d2f


def multiclass_working_quantities(Y: ArrayLike, kappa: ArrayLike) -> tuple[NDArray, NDArray]:
    """Per-class binary-logistic weights and working responses (``n x G``)."""
    return working_quantities(FamilySpec("binomial"), Y, kappa)


def multiclass_probabilities(gamma0: ArrayLike, Gamma: ArrayLike, B: ArrayLike,
                             x: ArrayLike) -> NDArray:
    """Softmax class probabilities of the symmetric multiclass model.

    ``x`` may be a single ``p``-vector or an ``n x p`` matrix.
    """
    gamma0 = np.asarray(gamma0, dtype=float)
    eta = gamma0 + (np.asarray(x, dtype=float) @ np.asarray(B, dtype=float)) @ np.asarray(Gamma, dtype=float)
    eta = eta - eta.max(axis=-1, keepdims=True)
    e = np.exp(eta)
    return e / e.sum(axis=-1, keepdims=True)
