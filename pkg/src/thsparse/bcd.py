"""Block-coordinate descent for the truncated-Huber recovery models.

For a fixed threshold ``mu`` the bi-variate surrogate is minimized by
alternating an exact x-update (a guarded linear solve) with the hard-filter
omega-update.  Two models are supported:

* ``"constrained"``: minimize the surrogate subject to ``A x = b``;
* ``"regularized"``: minimize ``(alpha/2)||A x - b||^2`` plus the surrogate.

Each full sweep cannot increase the (mode-appropriate) surrogate objective,
and once the binary filter repeats, the iterates are fixed: the solver
reports ``converged`` only when the relative x-change is below tolerance and
the filter is unchanged, at which point one more sweep would reproduce the
state exactly.

A solver instance is single-threaded and owns its state; independent runs
over shared read-only problems may execute in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import NearSingular, SpdFactor, as_matrix
from .penalty import (
    hard_filter,
    surrogate_objective_regularized,
    surrogate_value,
)

__all__ = [
    "CardinalityExceeded",
    "SurrogateBoundExceeded",
    "ThConfig",
    "IndexPartition",
    "SolverState",
    "partition_from_omega",
    "x_update_noisefree",
    "x_update_noisy",
    "x_update_noisy_direct",
    "bcd_run",
    "default_alpha",
    "kkt_residual_constrained",
    "kkt_residual_regularized",
]


class CardinalityExceeded(ValueError):
    """The active set is larger than the number of measurements."""


class SurrogateBoundExceeded(ValueError):
    """Initial surrogate value is not below m + 1.

    The finite-step convergence argument needs the initial surrogate value
    below the spark of A; the spark itself is NP-hard to compute, so the
    generic value m + 1 is used as a proxy (it holds with probability one
    for the random matrix families used here).
    """


@dataclass
class ThConfig:
    """Solver knobs for one fixed-threshold run.

    ``alpha`` only matters in regularized mode; ``None`` resolves to the
    documented default ``100 / mu**2``, which makes the data term dominate
    at moderate noise levels.  ``max_iter`` of ``None`` resolves to ``5 * n``.
    """

    mu: float
    alpha: float | None = None
    tol: float = 1e-8
    max_iter: int | None = None

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.alpha is not None and not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


def default_alpha(mu: float) -> float:
    return 100.0 / mu**2


@dataclass(frozen=True)
class IndexPartition:
    """Active set i1 (filter 1) and its complement i2, both sorted."""

    i1: np.ndarray
    i2: np.ndarray


@dataclass
class SolverState:
    x: np.ndarray
    omega: np.ndarray
    y: np.ndarray
    partition: IndexPartition
    objective: float
    iters: int
    converged: bool
    objective_history: list = field(default_factory=list)


def partition_from_omega(omega) -> IndexPartition:
    omega = np.asarray(omega, dtype=np.float64)
    if not np.all((omega == 0.0) | (omega == 1.0)):
        raise ValueError("omega must be binary")
    return IndexPartition(
        i1=np.flatnonzero(omega == 1.0),
        i2=np.flatnonzero(omega == 0.0),
    )


def _gram_complement(A, i1, gram=None):
    """A_{i2} A_{i2}^T, optionally as a downdate of the cached full Gram."""
    if gram is not None:
        if i1.size:
            A1 = A[:, i1]
            G = gram - A1 @ A1.T
        else:
            G = gram.copy()
    else:
        i2_mask = np.ones(A.shape[1], dtype=bool)
        i2_mask[i1] = False
        A2 = A[:, i2_mask]
        G = A2 @ A2.T
    return 0.5 * (G + G.T)


def _residual_extended(A1, x1, b):
    """A1 @ x1 - b accumulated in extended precision.

    The multiplier scales this residual by 2/mu^2, so at small mu the plain
    float64 rounding of the product would dominate the stationarity residual.
    """
    acc = A1.astype(np.longdouble) @ x1.astype(np.longdouble) - b.astype(np.longdouble)
    return acc.astype(np.float64)


def x_update_noisefree(A, b, partition, mu, gram=None):
    """Exact x-step of the constrained model for a fixed filter.

    Returns ``(x, y)`` with ``A x = b`` and multiplier ``y`` satisfying the
    first-order system: the free block solves a reduced weighted system, the
    penalized block is ``-(mu^2/2) A_{i2}^T y``.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    i1, i2 = partition.i1, partition.i2
    if i1.size > m:
        raise CardinalityExceeded(
            f"active set has {i1.size} entries but only {m} measurements"
        )
    G = _gram_complement(A, i1, gram)
    fac = SpdFactor(G)
    if i1.size:
        A1 = A[:, i1]
        W = fac.solve(A1)
        M = A1.T @ W
        M = 0.5 * (M + M.T)
        d = A1.T @ fac.solve(b)
        x1 = SpdFactor(M).solve(d)
        v = _residual_extended(A1, x1, b)
    else:
        x1 = np.zeros(0)
        v = -b
    w = fac.solve(v)
    y = (2.0 / mu**2) * w
    A2 = A[:, i2]
    x = np.zeros(n)
    x[i1] = x1
    x[i2] = -A2.T @ w
    return x, y


def x_update_noisy(A, b, partition, mu, alpha, gram=None):
    """Exact x-step of the regularized model for a fixed filter.

    Same block structure as the constrained step with the kernel
    ``(1/alpha) I + (mu^2/2) A_{i2} A_{i2}^T`` in place of the Gram of the
    complement.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    i1, i2 = partition.i1, partition.i2
    K = (0.5 * mu**2) * _gram_complement(A, i1, gram)
    K[np.diag_indices_from(K)] += 1.0 / alpha
    fac = SpdFactor(K)
    if i1.size:
        A1 = A[:, i1]
        W = fac.solve(A1)
        M = A1.T @ W
        M = 0.5 * (M + M.T)
        d = A1.T @ fac.solve(b)
        x1 = SpdFactor(M).solve(d)
        v = _residual_extended(A1, x1, b)
    else:
        x1 = np.zeros(0)
        v = -b
    y = fac.solve(v)
    A2 = A[:, i2]
    x = np.zeros(n)
    x[i1] = x1
    x[i2] = -(0.5 * mu**2) * (A2.T @ y)
    return x, y


def x_update_noisy_direct(A, b, omega, mu, alpha) -> np.ndarray:
    """Regularized x-step via the n x n normal equations.

    Solves ``(A^T A + (2/(alpha*mu^2)) diag(1-omega)) x = A^T b``; the
    unique solution whenever fewer than spark(A) diagonal weights vanish.
    Cross-checks the partitioned route.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    M = A.T @ A
    M = 0.5 * (M + M.T)
    M[np.diag_indices_from(M)] += (2.0 / (alpha * mu**2)) * (1.0 - omega)
    return SpdFactor(M).solve(A.T @ b)


def bcd_run(A, b, config: ThConfig, x0, omega0, mode="constrained", gram=None) -> SolverState:
    """Alternate exact x-updates with the hard filter until the iterates stop.

    Stops when the relative x-change falls below ``config.tol`` with the
    filter unchanged (converged), or after ``max_iter`` sweeps (state is
    still returned, flagged unconverged).  ``gram`` may carry a precomputed
    ``A @ A.T`` to speed up repeated sweeps.
    """
    if mode not in ("constrained", "regularized"):
        raise ValueError(f"unknown mode {mode!r}")
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    mu = config.mu
    alpha = config.alpha if config.alpha is not None else default_alpha(mu)
    max_iter = config.max_iter if config.max_iter is not None else 5 * n
    x = np.asarray(x0, dtype=np.float64).copy()
    omega = np.asarray(omega0, dtype=np.float64).copy()

    q0 = surrogate_value(x, omega, mu)
    if not q0 < m + 1:
        raise SurrogateBoundExceeded(
            f"initial surrogate value {q0:.6g} is not below m + 1 = {m + 1}"
        )

    def objective(xv, ov):
        if mode == "constrained":
            return surrogate_value(xv, ov, mu)
        return surrogate_objective_regularized(A, b, xv, ov, alpha, mu)

    history = []
    y = np.zeros(m)
    partition = partition_from_omega(omega)
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        partition = partition_from_omega(omega)
        if mode == "constrained":
            x_new, y = x_update_noisefree(A, b, partition, mu, gram=gram)
        else:
            x_new, y = x_update_noisy(A, b, partition, mu, alpha, gram=gram)
        omega_new = hard_filter(x_new, mu)
        history.append(objective(x_new, omega_new))
        delta = np.linalg.norm(x_new - x)
        xnorm = np.linalg.norm(x)
        small_step = delta < config.tol * xnorm if xnorm > 0.0 else delta < config.tol
        filter_stable = bool(np.array_equal(omega_new, omega))
        x = x_new
        omega = omega_new
        if small_step and filter_stable:
            converged = True
            break

    return SolverState(
        x=x,
        omega=omega,
        y=y,
        partition=partition_from_omega(omega),
        objective=history[-1] if history else objective(x, omega),
        iters=iters,
        converged=converged,
        objective_history=history,
    )


def kkt_residual_constrained(A, b, x, omega, y, mu):
    """Feasibility and stationarity residual norms of the constrained model.

    Returns ``(||A x - b||, ||(2/mu^2)(1-omega)*x + A^T y||)``; at a local
    optimum both vanish.  Accumulated in extended precision so the reported
    numbers measure the iterate, not float64 evaluation noise.
    """
    A_ld = np.asarray(A, dtype=np.float64).astype(np.longdouble)
    x_ld = np.asarray(x, dtype=np.float64).astype(np.longdouble)
    y_ld = np.asarray(y, dtype=np.float64).astype(np.longdouble)
    b_ld = np.asarray(b, dtype=np.float64).astype(np.longdouble)
    omega_ld = np.asarray(omega, dtype=np.float64).astype(np.longdouble)
    feas = np.linalg.norm((A_ld @ x_ld - b_ld).astype(np.float64))
    grad = (2.0 / np.longdouble(mu) ** 2) * (1.0 - omega_ld) * x_ld + A_ld.T @ y_ld
    return float(feas), float(np.linalg.norm(grad.astype(np.float64)))


def kkt_residual_regularized(A, b, x, omega, mu, alpha):
    """Stationarity residual ``||alpha A^T (A x - b) + (2/mu^2)(1-omega)*x||``."""
    A_ld = np.asarray(A, dtype=np.float64).astype(np.longdouble)
    x_ld = np.asarray(x, dtype=np.float64).astype(np.longdouble)
    b_ld = np.asarray(b, dtype=np.float64).astype(np.longdouble)
    omega_ld = np.asarray(omega, dtype=np.float64).astype(np.longdouble)
    grad = np.longdouble(alpha) * (A_ld.T @ (A_ld @ x_ld - b_ld))
    grad = grad + (2.0 / np.longdouble(mu) ** 2) * (1.0 - omega_ld) * x_ld
    return float(np.linalg.norm(grad.astype(np.float64)))
