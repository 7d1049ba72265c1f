"""Compiled coordinate cycle.

Mirrors the pure-python updates in :mod:`spcrglm.optimizer` exactly (same
formulas, same order); it exists only because one fit runs thousands of
scalar updates.  All arrays are modified in place.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def beta_sweep(X, gram, colsq, omega, resid, scores, B, GB, GA, gamma,
               lam_entry, lam_beta, xi, w):
    n, p = X.shape
    k = B.shape[1]
    G = gamma.shape[1]
    ridge = 2.0 * lam_beta * xi
    for j in range(k):
        for l in range(p):
            b = B[l, j]
            num = 2.0 * w * (GA[l, j] - GB[l, j] + b * colsq[l])
            den = 2.0 * w * colsq[l] + ridge
            for g in range(G):
                c = gamma[j, g]
                if c != 0.0:
                    s1 = 0.0
                    s2 = 0.0
                    for i in range(n):
                        xo = X[i, l] * omega[i, g]
                        s1 += xo * resid[i, g]
                        s2 += xo * X[i, l]
                    num += 2.0 * c * (s1 + c * b * s2)
                    den += 2.0 * c * c * s2
            if den > 0.0:
                new = _soft(num, (1.0 - xi) * lam_entry[l, j]) / den
            else:
                new = 0.0
            d = new - b
            if d != 0.0:
                B[l, j] = new
                for i in range(n):
                    dx = d * X[i, l]
                    scores[i, j] += dx
                    for g in range(G):
                        resid[i, g] -= gamma[j, g] * dx
                for m in range(p):
                    GB[m, j] += d * gram[m, l]


@njit(cache=True)
def gamma_sweep(B, omega, resid, scores, gamma, lam_gamma):
    n, k = scores.shape
    G = gamma.shape[1]
    for g in range(G):
        for j in range(k):
            c = gamma[j, g]
            dead = True
            for l in range(B.shape[0]):
                if B[l, j] != 0.0:
                    dead = False
                    break
            new = 0.0
            if not dead:
                s1 = 0.0
                s2 = 0.0
                for i in range(n):
                    ws = omega[i, g] * scores[i, j]
                    s1 += ws * resid[i, g]
                    s2 += ws * scores[i, j]
                if s2 > 0.0:
                    new = _soft(2.0 * (s1 + c * s2), lam_gamma) / (2.0 * s2)
            d = new - c
            if d != 0.0:
                gamma[j, g] = new
                for i in range(n):
                    resid[i, g] -= d * scores[i, j]


@njit(cache=True)
def intercept_sweep(omega, resid, gamma0):
    n, G = resid.shape
    for g in range(G):
        sw = 0.0
        swr = 0.0
        for i in range(n):
            sw += omega[i, g]
            swr += omega[i, g] * resid[i, g]
        d = swr / sw
        gamma0[g] += d
        for i in range(n):
            resid[i, g] -= d


# ---------------------------------------------------------------------------
# whole fit

GAUSSIAN, BINOMIAL, POISSON = 0, 1, 2
OMEGA_MIN = 1e-5
POISSON_CLIP = 30.0
LOG_2PI = np.log(2.0 * np.pi)


@njit(cache=True)
def _expit_pair(k):
    # (expit(k), expit(-k)) without cancellation
    if k >= 0.0:
        e = np.exp(-k)
        return 1.0 / (1.0 + e), e / (1.0 + e)
    e = np.exp(k)
    return e / (1.0 + e), 1.0 / (1.0 + e)


@njit(cache=True)
def _neg_loglik(code, phi, Y, kappa):
    n, G = Y.shape
    total = 0.0
    for i in range(n):
        for g in range(G):
            k = kappa[i, g]
            y = Y[i, g]
            if code == GAUSSIAN:
                total -= (y * k - 0.5 * k * k) / phi - y * y / (2.0 * phi) - 0.5 * (LOG_2PI + np.log(phi))
            elif code == BINOMIAL:
                total += max(k, 0.0) + np.log1p(np.exp(-abs(k))) - y * k
            else:
                total += np.exp(k) - y * k + math.lgamma(y + 1.0)
    return total


@njit(cache=True)
def _working(code, phi, Y, kappa, omega, z):
    n, G = Y.shape
    floor = 2.0 * phi * OMEGA_MIN
    for i in range(n):
        for g in range(G):
            k = kappa[i, g]
            y = Y[i, g]
            if code == GAUSSIAN:
                omega[i, g] = 1.0 / (2.0 * phi)
                z[i, g] = y
                continue
            if code == BINOMIAL:
                m, mc = _expit_pair(k)
                d1 = m
                d2 = m * mc
            else:
                k = min(max(k, -POISSON_CLIP), POISSON_CLIP)
                d1 = np.exp(k)
                d2 = d1
            d2 = max(d2, floor)
            omega[i, g] = d2 / (2.0 * phi)
            z[i, g] = k + (y - d1) / d2


@njit(cache=True)
def complete_basis(Q, p, k):
    """Extend orthonormal columns of ``Q`` to ``k`` columns (Gram-Schmidt on e_1, e_2, ...)."""
    out = np.zeros((p, k))
    r = Q.shape[1]
    for c in range(r):
        out[:, c] = Q[:, c]
    i = 0
    while r < k and i < p:
        v = np.zeros(p)
        v[i] = 1.0
        for _ in range(2):
            for c in range(r):
                s = 0.0
                for m in range(p):
                    s += out[m, c] * v[m]
                for m in range(p):
                    v[m] -= s * out[m, c]
        nv = np.sqrt(np.sum(v * v))
        if nv > 1e-8:
            out[:, r] = v / nv
            r += 1
        i += 1
    return out


@njit(cache=True)
def procrustes(M):
    p, k = M.shape
    U, d, Vt = np.linalg.svd(M, full_matrices=False)
    tol = max(p, k) * 2.220446049250313e-16 * d[0]
    rank = 0
    if d[0] > 0.0:
        for s in d:
            if s > tol:
                rank += 1
    if rank == k:
        return U @ Vt, False
    Uc = complete_basis(np.ascontiguousarray(U[:, :rank]), p, k)
    Vc = complete_basis(np.ascontiguousarray(Vt[:rank].T), k, k)
    return Uc @ Vc.T, True


@njit(cache=True)
def _penalty(B, gamma, lam_entry, lam_beta, xi, lam_gamma):
    return (lam_beta * xi * np.sum(B * B) + (1.0 - xi) * np.sum(lam_entry * np.abs(B))
            + lam_gamma * np.sum(np.abs(gamma)))


@njit(cache=True)
def _pca_loss(trace_gram, gram, A, B):
    # ||X - X B A^T||_F^2 expanded with A^T A = I
    GB = gram @ B
    return trace_gram - 2.0 * np.sum(A * GB) + np.sum(B * GB)


@njit(cache=True)
def _objective(code, phi, X, Y, trace_gram, gram, B, A, gamma0, gamma, lam_entry, lam_beta, xi, w,
               lam_gamma):
    kappa = (X @ B) @ gamma + gamma0
    return (_neg_loglik(code, phi, Y, kappa) + w * _pca_loss(trace_gram, gram, A, B)
            + _penalty(B, gamma, lam_entry, lam_beta, xi, lam_gamma))


@njit(cache=True)
def fit_loop(code, phi, X, Y, B, A, gamma0, gamma, lam_entry, lam_beta, xi, w, lam_gamma,
             max_outer, tol, max_cycles, multiclass, obj_trace, sur_trace):
    """Outer IRLS loop; parameters are updated in place.

    Returns ``(n_outer, converged, degenerate_A, failed)``.
    """
    n, p = X.shape
    G = Y.shape[1]
    gram = X.T @ X
    colsq = np.ascontiguousarray(np.diag(gram).copy())
    trace_gram = np.sum(colsq)
    omega = np.empty((n, G))
    z = np.empty((n, G))
    obj = _objective(code, phi, X, Y, trace_gram, gram, B, A, gamma0, gamma, lam_entry, lam_beta, xi, w, lam_gamma)
    obj_trace[0] = obj
    degenerate = False
    for t in range(1, max_outer + 1):
        scores = X @ B
        kappa = scores @ gamma + gamma0
        _working(code, phi, Y, kappa, omega, z)
        resid = z - kappa
        ridge = _penalty(B, gamma, lam_entry, lam_beta, xi, lam_gamma)
        sur_trace[t - 1, 0] = np.sum(omega * resid * resid) + w * _pca_loss(trace_gram, gram, A, B) + ridge
        for c in range(max_cycles):
            GB = gram @ B
            GA = gram @ A
            beta_sweep(X, gram, colsq, omega, resid, scores, B, GB, GA, gamma,
                       lam_entry, lam_beta, xi, w)
            gamma_sweep(B, omega, resid, scores, gamma, lam_gamma)
            intercept_sweep(omega, resid, gamma0)
            A2, degenerate = procrustes(gram @ B)
            A[:, :] = A2
            sur_trace[t - 1, c + 1] = (np.sum(omega * resid * resid) + w * _pca_loss(trace_gram, gram, A, B)
                                       + _penalty(B, gamma, lam_entry, lam_beta, xi, lam_gamma))
            scores = X @ B
            resid = z - (scores @ gamma + gamma0)
        if multiclass:
            for j in range(gamma.shape[0]):
                gamma[j, :] -= np.median(gamma[j, :])
            gamma0 -= np.mean(gamma0)
        prev = obj
        obj = _objective(code, phi, X, Y, trace_gram, gram, B, A, gamma0, gamma, lam_entry, lam_beta, xi, w, lam_gamma)
        obj_trace[t] = obj
        if not np.isfinite(obj):
            return t, False, degenerate, True
        if abs(obj - prev) / (abs(prev) + 1e-10) < tol:
            return t, True, degenerate, False
    return max_outer, False, degenerate, False
