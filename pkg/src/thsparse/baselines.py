"""Reference solvers: basis pursuit (the standard initializer), IHT, IRLS-Lp.

Basis pursuit minimizes the l1 norm over the affine feasible set via ADMM on
the consensus split (projection onto the constraint, soft threshold, dual
ascent) with a cached factorization of ``A A^T``; it replaces an external LP
solver and is the initializer every recovery method here starts from.

Iterative hard thresholding handles the cardinality-constrained least-squares
model; iteratively reweighted least squares handles the l_p quasi-norm
(0 < p < 1) with a decaying smoothing parameter.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .linalg import SpdFactor, as_matrix

__all__ = ["BaselineResult", "basis_pursuit", "iht", "irls_lp"]


class BaselineResult(NamedTuple):
    x: np.ndarray
    iterations: int
    converged: bool


def _soft(v, kappa):
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def basis_pursuit(A, b, penalty=1.0, over_relax=1.6, max_iter=10000,
                  eps_abs=1e-9, eps_rel=1e-9) -> BaselineResult:
    """min ||x||_1 subject to A x = b, by ADMM.

    The returned iterate is the projected (exactly feasible) one, so
    ``||A x - b||`` is at solve precision regardless of how early ADMM is
    stopped; the iteration cap is flagged through ``converged``.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    gram = A @ A.T
    fac = SpdFactor(0.5 * (gram + gram.T))
    x_min_norm = A.T @ fac.solve(b)

    def project(v):
        return v - A.T @ fac.solve(A @ v) + x_min_norm

    z = x_min_norm.copy()
    u = np.zeros(n)
    x = z
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x = project(z - u)
        x_relaxed = over_relax * x + (1.0 - over_relax) * z
        z_new = _soft(x_relaxed + u, 1.0 / penalty)
        u = u + x_relaxed - z_new
        primal = np.linalg.norm(x - z_new)
        dual = penalty * np.linalg.norm(z_new - z)
        z = z_new
        scale = max(np.linalg.norm(x), np.linalg.norm(z), 1.0)
        if primal <= eps_abs * np.sqrt(n) + eps_rel * scale and dual <= (
            eps_abs * np.sqrt(n) + eps_rel * penalty * np.linalg.norm(u)
        ):
            converged = True
            break
    return BaselineResult(x=x, iterations=it, converged=converged)


def _spectral_norm_sq(A, iters=50):
    """||A||_2^2 by power iteration on the Gram operator."""
    n = A.shape[1]
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        lam = np.linalg.norm(w)
        if lam == 0.0:
            return 0.0
        v = w / lam
    return float(lam)


def _keep_largest(v, s):
    out = np.zeros_like(v)
    if s >= v.size:
        return v.copy()
    keep = np.argpartition(np.abs(v), -s)[-s:]
    out[keep] = v[keep]
    return out


def iht(A, b, s, max_iter=1000, tol=1e-8) -> BaselineResult:
    """Gradient step + keep-s-largest, with a step-halving safeguard.

    The iterate always has at most s nonzeros, and the data misfit never
    increases: a step that would increase it is retried with half the step.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    if s < 1:
        raise ValueError(f"sparsity target must be >= 1, got {s}")
    if s > A.shape[0]:
        raise ValueError(f"sparsity target {s} exceeds measurement count {A.shape[0]}")
    lip = _spectral_norm_sq(A)
    step = 1.0 / lip if lip > 0 else 1.0
    x = np.zeros(A.shape[1])
    resid = b - A @ x
    misfit = float(resid @ resid)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = A.T @ resid
        eta = step
        while True:
            x_new = _keep_largest(x + eta * grad, s)
            resid_new = b - A @ x_new
            misfit_new = float(resid_new @ resid_new)
            if misfit_new <= misfit or eta < 1e-12 * step:
                break
            eta *= 0.5
        delta = np.linalg.norm(x_new - x)
        xnorm = np.linalg.norm(x)
        x, resid, misfit = x_new, resid_new, misfit_new
        if (delta < tol * xnorm if xnorm > 0 else delta < tol):
            converged = True
            break
    return BaselineResult(x=x, iterations=it, converged=converged)


def irls_lp(A, b, p=0.5, x0=None, max_iter=2000, inner_tol=1e-8,
            eps0=1.0, eps_floor=1e-8) -> BaselineResult:
    """Feasible IRLS for min sum |x_i|^p subject to A x = b, 0 < p < 1.

    Each iterate solves a weighted minimum-norm problem exactly (so stays
    feasible); weights use the smoothing (x_i^2 + eps^2)^(p/2 - 1), and eps
    is divided by 10 whenever the inner iteration settles, down to the floor.
    The smoothed objective sum (x_i^2 + eps^2)^(p/2) never increases.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    if not 0.0 < p < 1.0:
        raise ValueError(f"need 0 < p < 1, got {p}")
    gram = A @ A.T
    if x0 is None:
        x = A.T @ SpdFactor(0.5 * (gram + gram.T)).solve(b)
    else:
        x = np.asarray(x0, dtype=np.float64).copy()
    eps = eps0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = (x * x + eps * eps) ** (1.0 - 0.5 * p)  # inverse weights
        Ad = A * d
        K = Ad @ A.T
        x_new = d * (A.T @ SpdFactor(0.5 * (K + K.T)).solve(b))
        delta = np.linalg.norm(x_new - x)
        xnorm = np.linalg.norm(x)
        settled = delta < inner_tol * xnorm if xnorm > 0 else delta < inner_tol
        x = x_new
        if settled:
            if eps <= eps_floor:
                converged = True
                break
            eps = max(eps / 10.0, eps_floor)
    return BaselineResult(x=x, iterations=it, converged=converged)
