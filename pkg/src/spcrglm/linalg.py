"""Small dense kernels: soft-thresholding, centering, Procrustes rotation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "CenteredDesign",
    "ProcrustesResult",
    "center_columns",
    "fix_column_signs",
    "pc_scores",
    "procrustes_A",
    "soft_threshold",
    "top_right_singular_vectors",
]


def soft_threshold(z: ArrayLike, eta: float) -> NDArray | float:
    """``sign(z) * max(|z| - eta, 0)``."""
    if eta < 0:
        raise ValueError("threshold must be non-negative")
    z = np.asarray(z, dtype=float)
    out = np.sign(z) * np.maximum(np.abs(z) - eta, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CenteredDesign:
    """Column-centred design matrix together with what was removed.

    ``scale`` is all ones unless unit-variance scaling was requested.
    """

    X: NDArray
    col_means: NDArray
    scale: NDArray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def transform(self, raw: ArrayLike) -> NDArray:
        """Apply the stored centering (and scaling) to new rows."""
        return (np.asarray(raw, dtype=float) - self.col_means) / self.scale


def center_columns(raw: ArrayLike, scale: bool = False) -> CenteredDesign:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError("design must be a 2-d array")
    if raw.shape[0] < 2:
        raise ValueError("need at least two observations to centre")
    means = raw.mean(axis=0)
    X = raw - means
    sd = np.ones(raw.shape[1])
    if scale:
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = X / sd
    return CenteredDesign(X, means, sd)


def pc_scores(X: ArrayLike, B: ArrayLike) -> NDArray:
    return np.asarray(X, dtype=float) @ np.asarray(B, dtype=float)


def fix_column_signs(B: NDArray) -> NDArray:
    """Flip columns so that the entry of largest magnitude is positive."""
    B = np.array(B, dtype=float)
    if B.size == 0:
        return B
    idx = np.argmax(np.abs(B), axis=0)
    signs = np.sign(B[idx, np.arange(B.shape[1])])
    signs[signs == 0] = 1.0
    return B * signs


def top_right_singular_vectors(X: ArrayLike, k: int) -> NDArray:
    """Leading ``k`` right singular vectors, sign-normalised per column."""
    _, _, Vt = np.linalg.svd(np.asarray(X, dtype=float), full_matrices=False)
    V = Vt.T
    if V.shape[1] < k:
        # n < p: pad with an orthonormal completion
        V = _complete_basis(V, X.shape[1], k)
    return fix_column_signs(V[:, :k])


def _complete_basis(Q: NDArray, p: int, k: int) -> NDArray:
    """Extend orthonormal columns ``Q`` to ``k`` columns by Gram-Schmidt on e_1, e_2, ..."""
    cols = [Q[:, i] for i in range(Q.shape[1])]
    for i in range(p):
        if len(cols) == k:
            break
        v = np.zeros(p)
        v[i] = 1.0
        # two passes of modified Gram-Schmidt
        for _ in range(2):
            for c in cols:
                v -= (c @ v) * c
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            cols.append(v / nv)
    return np.column_stack(cols) if cols else np.zeros((p, 0))


class ProcrustesResult(NamedTuple):
    A: NDArray
    degenerate: bool


def procrustes_A(X: ArrayLike | None, B: ArrayLike, gram: ArrayLike | None = None) -> ProcrustesResult:
    """Orthonormal ``A`` maximising ``trace(A^T X^T X B)``.

    With ``X^T X B = U D V^T`` the maximiser is ``U V^T``.  When the product is
    rank deficient the missing singular directions are completed
    deterministically and ``degenerate`` is set.  Pass ``gram`` to reuse a
    precomputed ``X^T X``.
    """
    B = np.asarray(B, dtype=float)
    p, k = B.shape
    if k > p:
        raise ValueError("need k <= p")
    if gram is None:
        X = np.asarray(X, dtype=float)
        M = X.T @ (X @ B)
    else:
        M = np.asarray(gram, dtype=float) @ B
    U, d, Vt = np.linalg.svd(M, full_matrices=False)
    tol = max(p, k) * np.finfo(float).eps * (d[0] if d.size else 0.0)
    rank = int(np.sum(d > tol)) if d.size and d[0] > 0 else 0
    if rank == k:
        return ProcrustesResult(U @ Vt, False)
    U = _complete_basis(U[:, :rank], p, k)
    V = _complete_basis(Vt[:rank].T, k, k)
    return ProcrustesResult(U @ V.T, True)
