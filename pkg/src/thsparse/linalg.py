"""Dense kernels, guarded SPD solves, small-instance oracles, matrix file I/O.

Matrices are float64 numpy arrays in C (row-major) order throughout the
package.  The binary matrix format is fixed so that serialized matrices are
bit-reproducible:

* 16-byte header: magic ``b"THSPMAT\\0"`` (8 bytes), little-endian u32
  format version (currently 1), u32 reserved zero;
* little-endian u64 row count ``m``, u64 column count ``n``;
* ``m * n`` little-endian float64 entries in row-major order.

A CSV importer/exporter is provided for small matrices.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

__all__ = [
    "NearSingular",
    "as_matrix",
    "submatrix_cols",
    "SpdFactor",
    "spd_solve",
    "spark_bruteforce",
    "OracleResult",
    "enumerate_oracle",
    "l1_min_bruteforce",
    "save_matrix",
    "load_matrix",
    "save_matrix_csv",
    "load_matrix_csv",
]

_MAGIC = b"THSPMAT\x00"
_VERSION = 1

# Pivots below this fraction of the largest diagonal entry mean the system is
# too close to singular to trust; the caller owns the recovery policy.
PIVOT_RTOL = 1e-12

# Rank decisions in the brute-force oracles.
RANK_SV_RTOL = 1e-10


class NearSingular(ArithmeticError):
    """An SPD solve hit a pivot below the conditioning threshold."""

    def __init__(self, message, cond_estimate=np.inf):
        super().__init__(message)
        self.cond_estimate = float(cond_estimate)


def as_matrix(a) -> np.ndarray:
    """Validate and return a float64, C-ordered, finite 2-d matrix."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"matrix must be non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def submatrix_cols(A, idx) -> np.ndarray:
    """Columns of A at ``idx``, order preserved."""
    A = as_matrix(A)
    idx = np.asarray(idx, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= A.shape[1]):
        raise IndexError(
            f"column index out of range for matrix with {A.shape[1]} columns"
        )
    return np.ascontiguousarray(A[:, idx])


class SpdFactor:
    """Cholesky factorization with a pivot guard and iterative refinement.

    Symmetry is validated to 1e-12 (relative).  A pivot below
    ``PIVOT_RTOL * max_diagonal`` raises :class:`NearSingular` instead of
    silently regularizing.  ``solve`` polishes the solution with residuals
    accumulated in extended precision, which keeps true residuals near the
    float64 representation floor even for ill-scaled right-hand sides.
    """

    def __init__(self, M, pivot_rtol: float = PIVOT_RTOL):
        M = as_matrix(M)
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"matrix must be square, got shape {M.shape}")
        scale = np.max(np.abs(M))
        if scale > 0 and np.max(np.abs(M - M.T)) > 1e-12 * scale:
            raise ValueError("matrix is not symmetric to 1e-12 relative")
        self.M = M
        self._M_ld = M.astype(np.longdouble)
        max_diag = float(np.max(np.diag(M))) if M.size else 0.0
        try:
            self._L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise NearSingular(f"Cholesky failed: {exc}") from exc
        pivots = np.diag(self._L) ** 2
        min_pivot = float(np.min(pivots))
        if min_pivot < pivot_rtol * max_diag:
            raise NearSingular(
                f"pivot {min_pivot:.3e} below threshold "
                f"{pivot_rtol * max_diag:.3e}",
                cond_estimate=max_diag / max(min_pivot, np.finfo(float).tiny),
            )

    def _raw_solve(self, rhs):
        return cho_solve((self._L, True), rhs, check_finite=False)

    def solve(self, rhs, refine: int = 2) -> np.ndarray:
        """Solve ``M x = rhs`` with ``refine`` steps of iterative refinement."""
        rhs = np.asarray(rhs, dtype=np.float64)
        x = self._raw_solve(rhs)
        if refine:
            rhs_ld = rhs.astype(np.longdouble)
            for _ in range(refine):
                resid = rhs_ld - self._M_ld @ x.astype(np.longdouble)
                x = x + self._raw_solve(resid.astype(np.float64))
        return x


def spd_solve(M, rhs, refine: int = 2) -> np.ndarray:
    """One-shot guarded SPD solve; see :class:`SpdFactor`."""
    return SpdFactor(M).solve(rhs, refine=refine)


def _rank(B) -> int:
    sv = np.linalg.svd(B, compute_uv=False)
    if sv.size == 0:
        return 0
    return int(np.sum(sv > RANK_SV_RTOL * sv[0]))


def spark_bruteforce(A) -> int:
    """Smallest number of linearly dependent columns, by exhaustive search.

    A test oracle only: requires n <= 20 and no zero columns.  Returns m + 1
    when no subset of size <= m is dependent (any m + 1 columns always are).
    """
    A = as_matrix(A)
    m, n = A.shape
    if n > 20:
        raise ValueError(f"spark_bruteforce is exhaustive; n={n} exceeds 20")
    col_norms = np.linalg.norm(A, axis=0)
    if np.any(col_norms == 0.0):
        raise ValueError("zero columns are not allowed")
    for k in range(2, min(m, n) + 1):
        for subset in itertools.combinations(range(n), k):
            if _rank(A[:, subset]) < k:
                return k
    return m + 1


@dataclass(frozen=True)
class OracleResult:
    x: np.ndarray
    omega: np.ndarray
    objective: float


def _all_binary(n):
    for bits in range(1 << n):
        yield np.array([(bits >> i) & 1 for i in range(n)], dtype=np.float64)


def enumerate_oracle(A, b, mu, alpha=None) -> OracleResult:
    """Global minimizer of the surrogate objective over all binary omega.

    For each of the 2**n binary omega the induced quadratic subproblem is
    solved exactly; with ``alpha=None`` the equality-constrained (noise-free)
    model is used and infeasible omega are skipped, otherwise the regularized
    model.  Brute force: requires n <= 12.  Intended as a test oracle whose
    objective lower-bounds any solver output on the same instance.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if n > 12:
        raise ValueError(f"enumerate_oracle is exhaustive; n={n} exceeds 12")
    mu = float(mu)
    if mu <= 0:
        raise ValueError("mu must be positive")
    feas_tol = 1e-9 * (1.0 + np.linalg.norm(b))

    best = None
    for omega in _all_binary(n):
        i1 = np.flatnonzero(omega == 1.0)
        i2 = np.flatnonzero(omega == 0.0)
        if alpha is None:
            x = _constrained_min(A, b, i1, i2, feas_tol)
            if x is None:
                continue
            objective = float(np.sum(x[i2] ** 2)) / mu**2 + float(i1.size)
        else:
            x = _regularized_min(A, b, omega, mu, float(alpha))
            r = A @ x - b
            objective = (
                0.5 * float(alpha) * float(r @ r)
                + float(np.sum(x[i2] ** 2)) / mu**2
                + float(i1.size)
            )
        if best is None or objective < best.objective:
            best = OracleResult(x=x, omega=omega.copy(), objective=objective)
    return best


def _constrained_min(A, b, i1, i2, feas_tol):
    """Minimize ||x_{i2}||^2 subject to A x = b; None if infeasible."""
    m = A.shape[0]
    A1 = A[:, i1]
    A2 = A[:, i2]
    if i1.size:
        # Project the constraint onto the complement of range(A1): the free
        # block absorbs anything in range(A1) at zero cost.
        u, sv, _ = np.linalg.svd(A1, full_matrices=False)
        rank1 = int(np.sum(sv > RANK_SV_RTOL * sv[0])) if sv.size else 0
        u = u[:, :rank1]
        P = np.eye(m) - u @ u.T
    else:
        P = np.eye(m)
    Pb = P @ b
    if i2.size:
        PA2 = P @ A2
        x2, *_ = np.linalg.lstsq(PA2, Pb, rcond=None)
        if np.linalg.norm(PA2 @ x2 - Pb) > feas_tol:
            return None
    else:
        x2 = np.zeros(0)
        if np.linalg.norm(Pb) > feas_tol:
            return None
    if i1.size:
        x1, *_ = np.linalg.lstsq(A1, b - A2 @ x2, rcond=None)
    else:
        x1 = np.zeros(0)
    x = np.zeros(A.shape[1])
    x[i1] = x1
    x[i2] = x2
    if np.linalg.norm(A @ x - b) > feas_tol:
        return None
    return x


def _regularized_min(A, b, omega, mu, alpha):
    """Minimize (alpha/2)||Ax-b||^2 + (1/mu^2)||(1-omega)*x||^2 via stacking."""
    n = A.shape[1]
    w = np.sqrt(2.0 / mu**2) * (1.0 - omega)
    top = np.sqrt(alpha) * A
    bottom = np.diag(w)
    stacked = np.vstack([top, bottom])
    rhs = np.concatenate([np.sqrt(alpha) * b, np.zeros(n)])
    x, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)
    return x


def l1_min_bruteforce(A, b):
    """Exact min of ||x||_1 subject to Ax = b by basic-solution enumeration.

    A test oracle: requires n <= 10.  An optimal solution exists supported on
    at most m linearly independent columns, so enumerating those supports and
    checking feasibility finds the optimum.  Returns ``(objective, x)``.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if n > 10:
        raise ValueError(f"l1_min_bruteforce is exhaustive; n={n} exceeds 10")
    feas_tol = 1e-9 * (1.0 + np.linalg.norm(b))
    best_obj = np.inf
    best_x = None
    for k in range(0, min(m, n) + 1):
        for subset in itertools.combinations(range(n), k):
            sub = np.array(subset, dtype=int)
            As = A[:, sub]
            if k and _rank(As) < k:
                continue
            xs, *_ = np.linalg.lstsq(As, b, rcond=None) if k else (np.zeros(0),)
            resid = np.linalg.norm(As @ xs - b) if k else np.linalg.norm(b)
            if resid > feas_tol:
                continue
            obj = float(np.sum(np.abs(xs)))
            if obj < best_obj:
                best_obj = obj
                best_x = np.zeros(n)
                best_x[sub] = xs
    if best_x is None:
        raise ValueError("no feasible basic solution found (is A full row rank?)")
    return best_obj, best_x


def save_matrix(path, A) -> None:
    """Write a matrix in the package binary format (see module docstring)."""
    A = as_matrix(A)
    m, n = A.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, 0))
        fh.write(struct.pack("<QQ", m, n))
        fh.write(A.astype("<f8").tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}; not a matrix file")
        version, _ = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported matrix format version {version}")
        m, n = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(8 * m * n), dtype="<f8")
        if data.size != m * n:
            raise ValueError("truncated matrix file")
    return np.ascontiguousarray(data.reshape(m, n))


def save_matrix_csv(path, A) -> None:
    A = as_matrix(A)
    np.savetxt(path, A, delimiter=",", fmt="%.17g")


def load_matrix_csv(path) -> np.ndarray:
    return as_matrix(np.atleast_2d(np.loadtxt(path, delimiter=",")))
