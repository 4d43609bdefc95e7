"""Trend filtering backend: banded Gram systems of the difference operator.

For D = D^(k+1), any row subset D_{-B} has full row rank and its Gram
matrix D_{-B} D_{-B}^T is banded with half-bandwidth k+1, so each solve is a
banded Cholesky factorization in O(r k^2).  The factorization is rebuilt
whenever B changes and reused for both right-hand sides of a step.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded
from scipy.linalg.lapack import dgbtrf, dgbtrs

from .backend_base import Backend, ConditioningWarning, NumericalFailure
from .operators import TrendFilter, diff_coefficients

COND_LIMIT = 1e12


def gram_autocorrelation(k: int) -> np.ndarray:
    """Inner products of two rows of D^(k+1) whose offsets differ by g, g = 0..k+1."""
    c = diff_coefficients(k)
    return np.array([c[: c.size - g] @ c[g:] for g in range(k + 2)])


def banded_gram(k: int, rows: np.ndarray) -> np.ndarray:
    """Lower band storage of D_rows D_rows^T, shape (k+2, r).

    ab[u, j] holds the (j+u, j) entry.  Two interior rows more than k+1
    apart in the original numbering are orthogonal, and interior positions
    u apart are at least u apart in the original numbering, so k+1 lower
    diagonals suffice.
    """
    rows = np.asarray(rows)
    r = rows.size
    acf = gram_autocorrelation(k)
    ab = np.zeros((k + 2, r))
    ab[0] = acf[0]
    for u in range(1, k + 2):
        if u >= r:
            break
        gap = rows[u:] - rows[:-u]
        vals = np.zeros(gap.size)
        near = gap <= k + 1
        vals[near] = acf[gap[near]]
        ab[u, : r - u] = vals
    return ab


class BandedSPDFactor:
    """Banded Cholesky factor of a symmetric positive definite matrix.

    ``ab`` is lower band storage.  A non-positive pivot raises
    NumericalFailure unless ``fallback="lu"``, in which case the matrix is
    factored by banded LU with partial pivoting instead and a
    ConditioningWarning is issued.  The fallback exists for high-order
    trend filtering at large p, where the Gram matrix is numerically
    indefinite (its condition number grows like p^(2k+2)); results there
    carry no accuracy guarantee.
    """

    def __init__(self, ab: np.ndarray, fallback: str = "raise"):
        self.n = ab.shape[1]
        self.bandwidth = 2 * (ab.shape[0] - 1) + 1
        self.lu = None
        try:
            self.cb = cholesky_banded(ab, lower=True, check_finite=False)
        except LinAlgError as exc:
            if fallback != "lu":
                raise NumericalFailure(f"banded Cholesky failed: {exc}") from exc
            warnings.warn(
                f"banded Cholesky failed ({exc}); falling back to banded LU, "
                "solutions are not accurate",
                ConditioningWarning,
                stacklevel=3,
            )
            self._factor_lu(ab)
            return
        if self.n:
            cond = self.condition_estimate(ab)
            if cond > COND_LIMIT:
                warnings.warn(
                    f"Gram matrix condition estimate {cond:.2e} exceeds {COND_LIMIT:.0e}; "
                    "normal equations square the conditioning of D_{-B}",
                    ConditioningWarning,
                    stacklevel=3,
                )

    def condition_estimate(self, ab) -> float:
        """||M||_inf * ||M^{-1} 1||_inf, a lower bound on the inf-norm condition number.

        One extra solve.  For difference-operator Gram matrices it is exact
        in practice.
        """
        n = self.n
        rows = np.abs(ab[0]).copy()
        for u in range(1, min(ab.shape[0], n)):
            band = np.abs(ab[u, : n - u])
            rows[: n - u] += band
            rows[u:] += band
        return float(rows.max() * np.abs(self.solve(np.ones(n))).max())

    def _factor_lu(self, ab):
        w = ab.shape[0] - 1
        n = self.n
        # general band layout for gbtrf: w extra rows for fill, then u = w upper, l = w lower
        full = np.zeros((3 * w + 1, n))
        for u in range(1, w + 1):
            full[2 * w - u, u:] = ab[u, : n - u]
        full[2 * w] = ab[0]
        for u in range(1, w + 1):
            full[2 * w + u, : n - u] = ab[u, : n - u]
        lu, piv, info = dgbtrf(full, w, w)
        if info > 0:
            raise NumericalFailure(f"banded LU hit an exactly zero pivot at row {info}")
        self.lu = (lu, piv, w)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        if self.lu is not None:
            lu, piv, w = self.lu
            x, info = dgbtrs(lu, w, w, rhs, piv)
            return x
        return cho_solve_banded((self.cb, True), rhs, check_finite=False)

    def lower(self) -> np.ndarray:
        """Dense L (for tests)."""
        L = np.zeros((self.n, self.n))
        for u in range(self.cb.shape[0]):
            idx = np.arange(self.n - u)
            L[idx + u, idx] = self.cb[u, : self.n - u]
        return L


def tf_solve(k: int, rows: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve D_rows D_rows^T x = rhs for D = D^(k+1)."""
    return BandedSPDFactor(banded_gram(k, rows)).solve(np.asarray(rhs, float))


class TrendFilterBackend(Backend):
    name = "tf"

    def __init__(self, spec: TrendFilter, fallback: str = "raise"):
        if not isinstance(spec, TrendFilter):
            raise TypeError("TrendFilterBackend needs a TrendFilter penalty")
        super().__init__(spec)
        self.k = spec.order
        self.fallback = fallback
        self._factor = None

    def _on_add(self, i, pos):
        self._factor = None

    def _on_remove(self, i, pos):
        self._factor = None

    def factor(self) -> BandedSPDFactor:
        if self._factor is None:
            self._factor = BandedSPDFactor(banded_gram(self.k, self.interior), self.fallback)
        return self._factor

    def solve(self, c):
        rhs = np.diff(np.asarray(c, float), self.k + 1)[self.interior]
        return self.factor().solve(rhs)

    def nullity(self) -> int:
        if self.m == 0:
            return self.p
        return self.k + 1 + self.boundary.size


def tf_step_quantities(y, spec: TrendFilter, B=(), s=()):
    """(a_hat, b_hat) for boundary rows B with signs s."""
    be = TrendFilterBackend(spec)
    B = np.asarray(B, dtype=np.int64)
    be.set_boundary(B)
    a = be.solve(y)
    u = np.zeros(spec.m)
    u[B] = s
    b = be.solve(spec.matrix.T @ u)
    return a, b
