"""Truncated Huber penalty: value, hard filter, gradient, prox, surrogate.

The scalar penalty is ``min(1, x**2 / mu**2)``: quadratic for ``|x| <= mu``
and constant 1 above.  Summed over a vector it is a bounded, continuous
surrogate of the nonzero count; the threshold ``mu`` separates negligible
entries from significant ones, and the penalty tends to the exact nonzero
count as ``mu -> 0``.

All functions are pure and operate on float64 inputs; they are safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NotDifferentiableError",
    "PenaltyEvaluation",
    "penalty_scalar",
    "penalty_value",
    "hard_filter",
    "penalty_gradient",
    "evaluate",
    "prox",
    "surrogate_value",
    "objective_regularized",
    "surrogate_objective_regularized",
]


class NotDifferentiableError(ValueError):
    """Gradient requested at a breakpoint, i.e. some ``|x_i| == mu`` exactly.

    Optima of the penalized models never sit on a breakpoint, so hitting one
    mid-iteration is informational; it is reported rather than smoothed over.
    """

    def __init__(self, indices):
        self.indices = np.asarray(indices, dtype=int)
        super().__init__(
            f"penalty not differentiable: |x_i| == mu at indices {self.indices.tolist()}"
        )


@dataclass(frozen=True)
class PenaltyEvaluation:
    """Penalty value, binary filter, and gradient (None at a breakpoint)."""

    value: float
    filter: np.ndarray
    gradient: np.ndarray | None


def _check_mu(mu) -> float:
    mu = float(mu)
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    return mu


def _as_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {x.shape}")
    return x


def penalty_scalar(x, mu) -> float:
    """Scalar truncated Huber value ``min(1, x**2/mu**2)``.

    Continuous at ``|x| == mu`` where both branches equal 1.
    """
    mu = _check_mu(mu)
    x = float(x)
    return min(1.0, (x / mu) ** 2)


def penalty_value(x, mu) -> float:
    """Sum of the scalar penalty over all entries; lies in [0, len(x)].

    An empty vector evaluates to 0 by convention.
    """
    mu = _check_mu(mu)
    x = _as_vector(x)
    if x.size == 0:
        return 0.0
    return float(np.sum(np.minimum(1.0, (x / mu) ** 2)))


def hard_filter(x, mu) -> np.ndarray:
    """Binary marker of significant entries: 1 where ``|x_i| > mu``, else 0.

    The boundary ``|x_i| == mu`` maps to 0.  Returned as a float64 0/1 vector
    so that ``1 - omega`` arithmetic stays in float64.
    """
    mu = _check_mu(mu)
    x = _as_vector(x)
    return (np.abs(x) > mu).astype(np.float64)


def penalty_gradient(x, mu) -> np.ndarray:
    """Gradient ``(2/mu**2) * (1 - omega) * x`` where defined.

    Raises :class:`NotDifferentiableError` if any ``|x_i| == mu`` exactly;
    the breakpoint is never silently approximated.
    """
    mu = _check_mu(mu)
    x = _as_vector(x)
    at_break = np.flatnonzero(np.abs(x) == mu)
    if at_break.size:
        raise NotDifferentiableError(at_break)
    omega = hard_filter(x, mu)
    return (2.0 / mu**2) * (1.0 - omega) * x


def evaluate(x, mu) -> PenaltyEvaluation:
    """Value, filter and gradient in one pass; gradient is None at breakpoints."""
    mu = _check_mu(mu)
    x = _as_vector(x)
    value = penalty_value(x, mu)
    omega = hard_filter(x, mu)
    if np.any(np.abs(x) == mu):
        grad = None
    else:
        grad = (2.0 / mu**2) * (1.0 - omega) * x
    return PenaltyEvaluation(value=value, filter=omega, gradient=grad)


def prox(a, mu, lam):
    """Proximal map of the scalar penalty: argmin ``phi(x) + (x-a)^2/(2*lam)``.

    Closed form: the point is kept when ``|a| > sqrt(mu^2 + 2*lam)`` and
    shrunk by ``mu^2/(mu^2 + 2*lam)`` when ``|a| < sqrt(mu^2 + 2*lam)``.  At
    the tie both are minimizers; the shrunk candidate is returned (it biases
    toward the sparser surrogate and keeps the map deterministic).  The
    result never equals ``+-mu``.

    Accepts scalars or arrays and applies elementwise.
    """
    mu = _check_mu(mu)
    lam = float(lam)
    if not lam > 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    a_arr = np.asarray(a, dtype=np.float64)
    threshold = np.sqrt(mu**2 + 2.0 * lam)
    shrink = mu**2 / (mu**2 + 2.0 * lam)
    out = np.where(np.abs(a_arr) > threshold, a_arr, shrink * a_arr)
    if np.isscalar(a) or a_arr.ndim == 0:
        return float(out)
    return out


def _check_binary(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=np.float64)
    if omega.ndim != 1:
        raise ValueError(f"omega must be a 1-d vector, got shape {omega.shape}")
    if not np.all((omega == 0.0) | (omega == 1.0)):
        raise ValueError("omega must be binary (entries 0 or 1)")
    return omega


def surrogate_value(x, omega, mu) -> float:
    """Bi-variate surrogate ``(1/mu^2)*||(1-omega)*x||^2 + ||omega||_0``.

    Upper-bounds the penalty for every binary omega; the minimum over omega
    equals the penalty and is attained at ``hard_filter(x, mu)``.
    """
    mu = _check_mu(mu)
    x = _as_vector(x)
    omega = _check_binary(omega)
    if omega.shape != x.shape:
        raise ValueError("x and omega must have the same length")
    quad = float(np.sum(((1.0 - omega) * x) ** 2)) / mu**2
    return quad + float(np.sum(omega))


def _check_system(A, b, x):
    A = np.asarray(A, dtype=np.float64)
    b = _as_vector(b)
    x = _as_vector(x)
    if A.ndim != 2:
        raise ValueError(f"A must be a matrix, got shape {A.shape}")
    if A.shape[0] != b.size or A.shape[1] != x.size:
        raise ValueError(
            f"dimension mismatch: A is {A.shape}, b has {b.size}, x has {x.size}"
        )
    return A, b, x


def objective_regularized(A, b, x, alpha, mu) -> float:
    """Regularized objective ``(alpha/2)*||A x - b||^2 + penalty_value(x, mu)``."""
    alpha = float(alpha)
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    A, b, x = _check_system(A, b, x)
    r = A @ x - b
    return 0.5 * alpha * float(r @ r) + penalty_value(x, mu)


def surrogate_objective_regularized(A, b, x, omega, alpha, mu) -> float:
    """Same data term with the surrogate in place of the penalty."""
    alpha = float(alpha)
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    A, b, x = _check_system(A, b, x)
    r = A @ x - b
    return 0.5 * alpha * float(r @ r) + surrogate_value(x, omega, mu)
