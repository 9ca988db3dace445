"""Small dense linear-algebra kernel.

Matrices are plain 2-D float64 numpy arrays. The solves lean on LAPACK's
Cholesky through scipy; singular values come from a one-sided Jacobi sweep
written out here, which keeps the tiny singular values of rank-deficient
matrices at round-off level (needed for the ``1e-8`` rank checks).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

Array = NDArray[np.float64]

ATOL = 1e-8
SYMMETRY_TOL = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization failed: the matrix is not SPD."""


def _as_matrix(a: ArrayLike, name: str = "matrix") -> Array:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def matmul(a: ArrayLike, b: ArrayLike) -> Array:
    a = _as_matrix(a, "left operand")
    b = _as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def outer(u: ArrayLike, v: ArrayLike) -> Array:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1:
        raise ValueError("outer expects two vectors")
    return np.outer(u, v)


def transpose(a: ArrayLike) -> Array:
    return _as_matrix(a).T.copy()


class SpdSystem:
    """A symmetric positive-definite matrix with a cached Cholesky factor.

    Raises :class:`NotPositiveDefiniteError` on construction if ``A`` is not
    symmetric to within ``1e-10`` or the factorization fails.
    """

    def __init__(self, a: ArrayLike):
        a = _as_matrix(a)
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"SPD matrix must be square, got {a.shape}")
        if a.size and np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
            raise NotPositiveDefiniteError("matrix is not symmetric")
        self.a = a
        try:
            self._factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(str(exc)) from None
        self._inverse: Array | None = None

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def solve(self, b: ArrayLike) -> Array:
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.dim:
            raise ValueError(f"rhs has length {b.shape[0]}, system has dim {self.dim}")
        return scipy.linalg.cho_solve(self._factor, b, check_finite=False)

    def inverse(self) -> Array:
        if self._inverse is None:
            inv = self.solve(np.eye(self.dim))
            self._inverse = 0.5 * (inv + inv.T)
        return self._inverse


def spd_solve(a: ArrayLike | SpdSystem, b: ArrayLike) -> Array:
    """Solve ``A x = b`` for SPD ``A`` via Cholesky."""
    system = a if isinstance(a, SpdSystem) else SpdSystem(a)
    return system.solve(b)


def spd_inverse(a: ArrayLike) -> Array:
    return SpdSystem(a).inverse()


def sherman_morrison(a_inv: ArrayLike, v: ArrayLike) -> Array:
    """Return ``(A + v v^T)^{-1}`` given ``A^{-1}`` (A symmetric positive definite)."""
    a_inv = np.asarray(a_inv, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = a_inv @ v
    denom = 1.0 + v @ w
    return a_inv - np.outer(w, w) / denom


def sherman_morrison_inplace(a_inv: Array, v: Array) -> None:
    """In-place variant used on the hot path of the bandit policies."""
    w = a_inv @ v
    denom = 1.0 + v @ w
    a_inv -= np.outer(w, w / denom)


def singular_values(m: ArrayLike, max_sweeps: int = 60) -> Array:
    """Singular values in descending order, length ``min(rows, cols)``.

    Cyclic one-sided Jacobi: pairs of columns are rotated until mutually
    orthogonal, which diagonalizes ``M^T M`` without forming it. The column
    norms are then the singular values.
    """
    m = _as_matrix(m)
    if m.shape[0] < m.shape[1]:
        m = m.T
    u = m.copy()
    n = u.shape[1]
    if n == 0:
        return np.zeros(0)
    eps = np.finfo(np.float64).eps
    # Columns at round-off size relative to the whole matrix are left alone;
    # rotating them among themselves only shuffles noise.
    negligible = (eps * np.linalg.norm(u)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ui = u[:, i]
                uj = u[:, j]
                alpha = ui @ ui
                beta = uj @ uj
                gamma = ui @ uj
                if min(alpha, beta) <= negligible or abs(gamma) <= eps * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_i = c * ui - s * uj
                u[:, j] = s * ui + c * uj
                u[:, i] = new_i
        if not rotated:
            break
    sigma = np.sqrt(np.einsum("ij,ij->j", u, u))
    return np.sort(sigma)[::-1]


def numerical_rank(sigma: ArrayLike, rtol: float | None = None, atol: float | None = None) -> int:
    """Count singular values above ``atol`` or ``rtol * sigma_max``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size == 0:
        return 0
    threshold = 0.0
    if atol is not None:
        threshold = max(threshold, atol)
    if rtol is not None:
        threshold = max(threshold, rtol * float(sigma.max()))
    return int(np.sum(sigma > threshold))
