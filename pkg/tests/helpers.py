"""Shared test helpers: random instances and independent oracles."""

import numpy as np

from spcrglm import FamilySpec, HyperParams, SpcrParams
from spcrglm.optimizer import init_params


def random_orthonormal(rng, p, k):
    q, r = np.linalg.qr(rng.normal(size=(p, k)))
    return q * np.sign(np.diag(r))


def random_response(rng, fam: FamilySpec, n: int):
    if fam.kind == "gaussian":
        return rng.normal(size=n)
    if fam.kind == "binomial":
        y = rng.integers(0, 2, n).astype(float)
        y[:2] = (0.0, 1.0)
        return y
    if fam.kind == "poisson":
        return rng.poisson(1.5, n).astype(float)
    labels = np.arange(n) % fam.G
    rng.shuffle(labels)
    return np.eye(fam.G)[labels]


def random_instance(rng, fam: FamilySpec, n=10, p=3, k=1, at_init=False):
    """Centred design, response, random (or PCA-initialised) parameters, hyperparameters."""
    X = rng.normal(size=(n, p))
    X -= X.mean(axis=0)
    y = random_response(rng, fam, n)
    G = fam.G if fam.is_multiclass else 1
    hyper = HyperParams(w=float(rng.uniform(0.01, 1.0)), xi=float(rng.uniform(0, 0.5)),
                        lambda_beta=float(rng.uniform(0, 2)), lambda_gamma=float(rng.uniform(0, 2)))
    if at_init:
        params = init_params(X, y, fam, k)
    else:
        B = rng.normal(size=(p, k))
        A = random_orthonormal(rng, p, k)
        if fam.is_multiclass:
            params = SpcrParams(B, A, rng.normal(size=G), rng.normal(size=(k, G)))
        else:
            params = SpcrParams(B, A, float(rng.normal()), rng.normal(size=k))
    return X, y, params, hyper


def naive_surrogate(X, omega, z, B, A, gamma0, gamma, hyper: HyperParams):
    """Weighted least squares plus PCA loss plus penalties, observation by observation.

    ``B`` may carry leading batch axes (``... x p x k``), as may ``gamma``
    (``... x k x G``) and ``gamma0`` (``... x G``).  Evaluated in extended
    precision: with floored weights the working responses are large and the
    restriction's curvature is tiny relative to its value.
    """
    ld = np.longdouble
    X = np.asarray(X, dtype=ld)
    A = np.asarray(A, dtype=ld)
    n, p = X.shape
    omega = np.asarray(omega, dtype=ld).reshape(n, -1)
    z = np.asarray(z, dtype=ld).reshape(n, -1)
    G = omega.shape[1]
    B = np.asarray(B, dtype=ld)
    gamma = np.asarray(gamma, dtype=ld)
    gamma0 = np.asarray(gamma0, dtype=ld)
    batch = np.broadcast_shapes(B.shape[:-2], gamma.shape[:-2], gamma0.shape[:-1])
    B = np.broadcast_to(B, batch + B.shape[-2:])
    gamma = np.broadcast_to(gamma.reshape(gamma.shape[:-2] + (B.shape[-1], G)), batch + (B.shape[-1], G))
    gamma0 = np.broadcast_to(gamma0.reshape(gamma0.shape[:-1] + (G,)), batch + (G,))
    total = np.zeros(batch, dtype=ld)
    for i in range(n):
        x = X[i]
        score = np.einsum("l,...lj->...j", x, B)
        for g in range(G):
            eta = gamma0[..., g] + np.einsum("...j,...j->...", score, gamma[..., :, g])
            total = total + omega[i, g] * (z[i, g] - eta) ** 2
        recon = x - np.einsum("...j,lj->...l", score, A)
        total = total + hyper.w * np.sum(recon**2, axis=-1)
    lam = hyper.entry_penalties(*B.shape[-2:]).astype(ld)
    total = total + hyper.lambda_beta * hyper.xi * np.sum(B**2, axis=(-2, -1))
    total = total + (1 - hyper.xi) * np.sum(lam * np.abs(B), axis=(-2, -1))
    total = total + hyper.lambda_gamma * np.sum(np.abs(gamma), axis=(-2, -1))
    return total


def grid_argmin(f, start=0.0, half_width=60.0, final_step=1e-6):
    """Argmin of a convex 1-D function by successively refined uniform grids.

    The initial bracket is widened until the coarse minimiser is interior.
    """
    centre, width = float(start), float(half_width)
    while True:
        grid = centre + np.linspace(-width, width, 2001)
        best = float(grid[int(np.argmin(f(grid)))])
        if abs(best - centre) < 0.999 * width:
            break
        centre, width = best, 4 * width
    centre, width, step = best, 2 * width / 1000, width / 1000
    while step > final_step:
        step = max(step / 100, final_step)
        grid = centre + np.arange(-width, width + step / 2, step)
        centre = float(grid[int(np.argmin(f(grid)))])
        width = 2 * step
    return centre
