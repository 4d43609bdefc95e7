"""Givens-rotation QR factorizations, minimum-norm least squares and updates.

Two factor types live here:

``QRFactor``
    ``A = QR`` for a matrix of full column rank, with ``R = [R1; 0]``.

``RotatedQRFactor``
    ``A P G = Q R`` for a matrix of any rank ``k``, where ``P`` permutes
    columns, ``G`` is an orthogonal product of Givens rotations and
    ``R = [[0, R1], [0, 0]]`` with ``R1`` a ``k x k`` upper triangular block
    in the top-right corner. The zero leading block is what makes minimum
    l2-norm solves a single triangular solve.

Both keep ``Q`` (and ``G``) as explicit dense matrices so that rows of ``Q``
can be read in O(m) during row deletion. All updates mutate the factor in
place and return it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "RANK_RTOL",
    "RankDeficientError",
    "GivensRotation",
    "givens_for",
    "QRFactor",
    "RotatedQRFactor",
    "qr_full",
    "qr_pivoted",
    "qr_rotated",
    "solve_ls_unique",
    "solve_ls_minnorm",
    "solve_ls_basic",
    "update_add_row",
    "update_remove_row",
    "update_column",
    "rank_tolerance",
]

RANK_RTOL = 1e-11


class RankDeficientError(np.linalg.LinAlgError):
    """Raised when a full-rank factorization meets a (numerically) zero pivot."""


def rank_tolerance(m: int, n: int, scale: float) -> float:
    """Threshold below which a triangular diagonal entry counts as zero."""
    return RANK_RTOL * max(m, n, 1) * scale


def givens_for(a: float, b: float) -> tuple[float, float]:
    """Return ``(c, s)`` such that ``G^T (a, b) = (hypot(a, b), 0)``.

    With ``G = [[c, s], [-s, c]]`` this is ``c = a/d`` and ``s = -b/d``.
    """
    if a == 0.0 and b == 0.0:
        raise ValueError("no Givens rotation for the zero vector")
    # rescale first so subnormal inputs keep full precision
    t = max(abs(a), abs(b))
    a, b = a / t, b / t
    d = math.hypot(a, b)
    return a / d, -b / d


@dataclass(frozen=True)
class GivensRotation:
    """The rotation ``G(i, j)``: identity except in rows/columns ``i`` and ``j``."""

    i: int
    j: int
    c: float
    s: float

    def __post_init__(self):
        if not self.i < self.j:
            raise ValueError(f"need i < j, got i={self.i}, j={self.j}")

    @classmethod
    def zeroing(cls, x: np.ndarray, i: int, j: int) -> GivensRotation:
        """Rotation whose transpose moves ``x[j]`` into ``x[i]``, zeroing ``x[j]``."""
        c, s = givens_for(x[i], x[j])
        return cls(i, j, c, s)

    def matrix(self, n: int) -> np.ndarray:
        G = np.eye(n)
        G[self.i, self.i] = G[self.j, self.j] = self.c
        G[self.i, self.j] = self.s
        G[self.j, self.i] = -self.s
        return G

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Return ``G^T x``; only components ``i`` and ``j`` change."""
        z = np.array(x, dtype=float, copy=True)
        _rot_rows(z, self.i, self.j, self.c, self.s)
        return z

    def rotate_rows(self, A: np.ndarray) -> None:
        """In place ``A <- G^T A``."""
        _rot_rows(A, self.i, self.j, self.c, self.s)

    def rotate_columns(self, A: np.ndarray) -> None:
        """In place ``A <- A G``."""
        _rot_cols(A, self.i, self.j, self.c, self.s)


def _rot_rows(M, i, j, c, s):
    # M <- G(i,j)^T M
    mi = M[i].copy()
    mj = M[j]
    M[i] = c * mi - s * mj
    M[j] = s * mi + c * mj


def _rot_cols(M, i, j, c, s):
    # M <- M G(i,j)
    mi = M[:, i].copy()
    mj = M[:, j]
    M[:, i] = c * mi - s * mj
    M[:, j] = s * mi + c * mj


def _zero_row_entry(R, Q, pivot, target, col, start=0):
    """Rotate rows (pivot, target) of R so that R[target, col] = 0.

    The same rotation is applied to the columns of Q so Q @ R is unchanged.
    Columns of R before ``start`` are known to be zero in both rows.
    """
    b = R[target, col]
    if b == 0.0:
        return
    a = R[pivot, col]
    d = math.hypot(a, b)
    c, s = a / d, -b / d
    Rp = R[pivot, start:].copy()
    Rt = R[target, start:]
    R[pivot, start:] = c * Rp - s * Rt
    R[target, start:] = s * Rp + c * Rt
    R[target, col] = 0.0
    _rot_cols(Q, pivot, target, c, s)


def _zero_col_entry(R, G, row, target, into, stop=None):
    """Rotate columns (target, into) of R so that R[row, target] = 0.

    The same rotation is applied to the columns of G. Rows of R at or after
    ``stop`` are known to be zero in both columns.
    """
    xt = R[row, target]
    if xt == 0.0:
        return
    xi = R[row, into]
    d = math.hypot(xt, xi)
    # new_t = c xt - s xi = 0, new_i = s xt + c xi = d
    c, s = xi / d, xt / d
    rows = slice(0, stop)
    Rt = R[rows, target].copy()
    Ri = R[rows, into]
    R[rows, target] = c * Rt - s * Ri
    R[rows, into] = s * Rt + c * Ri
    R[row, target] = 0.0
    gt = G[:, target].copy()
    gi = G[:, into]
    G[:, target] = c * gt - s * gi
    G[:, into] = s * gt + c * gi


# ---------------------------------------------------------------------------
# full column rank


@dataclass
class QRFactor:
    """``A = Q R`` with ``A`` of full column rank ``n`` (so ``m >= n``)."""

    Q: np.ndarray
    R: np.ndarray
    scale: float

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def n(self) -> int:
        return self.R.shape[1]

    @property
    def R1(self) -> np.ndarray:
        return self.R[: self.n, :]

    @property
    def tol(self) -> float:
        return rank_tolerance(self.m, self.n, self.scale)

    def matrix(self) -> np.ndarray:
        return self.Q @ self.R

    def _check_rank(self):
        n = self.n
        if self.m < n:
            raise RankDeficientError(f"{self.m} rows cannot have column rank {n}")
        diag = np.abs(np.diag(self.R[:n, :n]))
        bad = np.flatnonzero(diag <= self.tol)
        if bad.size:
            raise RankDeficientError(
                f"pivot {bad[0]} of R1 is {diag[bad[0]]:.3g} <= tol {self.tol:.3g}"
            )

    def _fix_signs(self):
        n = min(self.m, self.n)
        neg = np.flatnonzero(np.diag(self.R[:n, :n]) < 0)
        self.R[neg] *= -1.0
        self.Q[:, neg] *= -1.0


def qr_full(A) -> QRFactor:
    """Givens QR of a full column rank matrix in O(m n^2).

    Raises ``RankDeficientError`` when a diagonal entry of ``R1`` falls under
    the rank tolerance; callers then fall back to :func:`qr_rotated`.
    """
    R = np.array(A, dtype=float, copy=True)
    if R.ndim != 2:
        raise ValueError("A must be two-dimensional")
    m, n = R.shape
    if m < n:
        raise RankDeficientError(f"{m} x {n} matrix cannot have full column rank")
    Q = np.eye(m)
    for j in range(n):
        for t in range(m - 1, j, -1):
            _zero_row_entry(R, Q, t - 1, t, j, start=j)
    f = QRFactor(Q, R, float(np.max(np.abs(A), initial=0.0)))
    f._check_rank()
    f._fix_signs()
    return f


def solve_ls_unique(f: QRFactor, b) -> np.ndarray:
    """Unique minimizer of ``||b - A x||`` from a full-rank factor."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != f.m:
        raise ValueError(f"b has length {b.shape[0]}, expected {f.m}")
    n = f.n
    if n == 0:
        return np.zeros(0)
    c = f.Q[:, :n].T @ b
    return solve_triangular(f.R[:n, :n], c, lower=False)


# ---------------------------------------------------------------------------
# any rank


@dataclass
class RotatedQRFactor:
    """``M P G = Q R`` with ``R = [[0, R1], [0, 0]]`` and ``R1`` k x k upper triangular.

    ``M`` is the stored matrix. When ``transposed`` is true the factor stands
    for ``A = M^T``: least-squares solves are for ``A`` and column updates of
    ``A`` become row updates of ``M``.
    """

    perm: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    k: int
    scale: float
    transposed: bool = False

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def n(self) -> int:
        return self.R.shape[1]

    @property
    def R1(self) -> np.ndarray:
        n, k = self.n, self.k
        return self.R[:k, n - k :]

    @property
    def tol(self) -> float:
        return rank_tolerance(self.m, self.n, self.scale)

    def stored_matrix(self) -> np.ndarray:
        """Reconstruct ``M`` from ``Q R G^T P^T``."""
        MP = self.Q @ self.R @ self.G.T
        M = np.empty_like(MP)
        M[:, self.perm] = MP
        return M

    def matrix(self) -> np.ndarray:
        """The matrix ``A`` this factor represents."""
        M = self.stored_matrix()
        return M.T if self.transposed else M

    def _fix_signs(self):
        n, k = self.n, self.k
        d = np.diag(self.R[:k, n - k :])
        neg = np.flatnonzero(d < 0)
        self.R[neg] *= -1.0
        self.Q[:, neg] *= -1.0


def qr_pivoted(A, tol: float | None = None):
    """Column-pivoted Givens QR ``A P = Q [[R1, R2], [0, 0]]``.

    Greedy pivoting on the largest remaining column norm. Returns
    ``(Q, R, perm, k, scale)`` where ``A[:, perm] = Q @ R``.
    """
    R = np.array(A, dtype=float, copy=True)
    if R.ndim != 2:
        raise ValueError("A must be two-dimensional")
    m, n = R.shape
    scale = float(np.max(np.abs(R), initial=0.0))
    if tol is None:
        tol = rank_tolerance(m, n, scale)
    Q = np.eye(m)
    perm = np.arange(n)
    k = 0
    for j in range(min(m, n)):
        norms = np.einsum("ij,ij->j", R[j:, j:], R[j:, j:])
        p = j + int(np.argmax(norms))
        if math.sqrt(norms[p - j]) <= tol:
            break
        if p != j:
            R[:, [j, p]] = R[:, [p, j]]
            perm[[j, p]] = perm[[p, j]]
        for t in range(m - 1, j, -1):
            _zero_row_entry(R, Q, t - 1, t, j, start=j)
        k = j + 1
    R[k:, :] = 0.0
    return Q, R, perm, k, scale


def qr_rotated(A, transposed: bool = False) -> RotatedQRFactor:
    """Rotated QR of any matrix, in O(m n k).

    With ``transposed=True`` the factorization is of ``A^T`` and the result
    solves least-squares problems in ``A`` (the transposed variant).
    """
    A = np.asarray(A, dtype=float)
    M = A.T if transposed else A
    Q, R, perm, k, scale = qr_pivoted(M)
    n = R.shape[1]
    G = np.eye(n)
    # push [R1 R2] into [0 R1~] with k(n-k) column rotations, last row first
    for i in range(k - 1, -1, -1):
        for t in range(i, i + n - k):
            _zero_col_entry(R, G, i, t, t + 1, stop=i + 1)
    f = RotatedQRFactor(perm, G, Q, R, k, scale, transposed)
    f._fix_signs()
    return f


def solve_ls_minnorm(f: RotatedQRFactor, b) -> np.ndarray:
    """Minimum l2-norm minimizer of ``||b - A x||`` for the factored ``A``.

    Non-transposed: ``x = P G (0, R1^{-1} (Q^T b)[:k])`` (back-solve).
    Transposed (``M = A^T`` stored): ``x = Q[:, :k] R1^{-T} (G^T P^T b)[n-k:]``
    (forward-solve).
    """
    b = np.asarray(b, dtype=float)
    m, n, k = f.m, f.n, f.k
    if not f.transposed:
        if b.shape[0] != m:
            raise ValueError(f"b has length {b.shape[0]}, expected {m}")
        x = np.zeros(n)
        if k == 0:
            return x
        c = f.Q[:, :k].T @ b
        w = np.zeros(n)
        w[n - k :] = solve_triangular(f.R1, c, lower=False)
        x[f.perm] = f.G @ w
        return x
    if b.shape[0] != n:
        raise ValueError(f"b has length {b.shape[0]}, expected {n}")
    if k == 0:
        return np.zeros(m)
    c = f.G[:, n - k :].T @ b[f.perm]
    z1 = solve_triangular(f.R1, c, lower=False, trans="T")
    return f.Q[:, :k] @ z1


def solve_ls_basic(A, b) -> np.ndarray:
    """A basic (not necessarily minimum-norm) least-squares solution.

    Uses ``A P = Q [R1 R2]`` and sets the trailing block of ``P^T x`` to zero.
    """
    b = np.asarray(b, dtype=float)
    Q, R, perm, k, _ = qr_pivoted(A)
    n = R.shape[1]
    z = np.zeros(n)
    if k:
        z[:k] = solve_triangular(R[:k, :k], Q[:, :k].T @ b, lower=False)
    x = np.zeros(n)
    x[perm] = z
    return x


# ---------------------------------------------------------------------------
# updates


def _embed_row(Q, index):
    """Orthogonal ``[[0, Q1], [1, 0], [0, Q2]]`` for a row inserted at ``index``."""
    m = Q.shape[0]
    Qs = np.zeros((m + 1, m + 1))
    Qs[index, 0] = 1.0
    keep = np.ones(m + 1, dtype=bool)
    keep[index] = False
    Qs[keep, 1:] = Q
    return Qs


def _check_index(index, upper):
    if not 0 <= index <= upper:
        raise IndexError(f"position {index} outside [0, {upper}]")


def _full_add_row(f: QRFactor, w, index):
    m, n = f.R.shape
    f.Q = _embed_row(f.Q, index)
    f.R = np.vstack([w, f.R])
    # [w; R1] is upper Hessenberg: clear the subdiagonal
    for j in range(min(n, m)):
        _zero_row_entry(f.R, f.Q, j, j + 1, j, start=j)
    f.scale = max(f.scale, float(np.max(np.abs(w), initial=0.0)))
    f._fix_signs()
    return f


def _delete_row_of_q(R, Q, index):
    """Rotate so that row ``index`` of Q becomes ``+-e_1``, then drop it.

    Returns the reduced ``(R, Q)``; the first row of the rotated R is
    discarded along with the first column of the rotated Q.
    """
    m = Q.shape[0]
    q = Q[index].copy()
    for t in range(m - 2, -1, -1):
        b = q[t + 1]
        if b == 0.0:
            continue
        a = q[t]
        d = math.hypot(a, b)
        c, s = a / d, -b / d
        q[t], q[t + 1] = d, 0.0
        _rot_rows(R, t, t + 1, c, s)
        _rot_cols(Q, t, t + 1, c, s)
    keep = np.ones(m, dtype=bool)
    keep[index] = False
    return R[1:].copy(), Q[keep][:, 1:].copy()


def _full_remove_row(f: QRFactor, index):
    m, n = f.R.shape
    if m - 1 < n:
        raise RankDeficientError("removing a row would lose full column rank")
    f.R, f.Q = _delete_row_of_q(f.R, f.Q, index)
    f.R[n:, :] = 0.0
    f._check_rank()
    f._fix_signs()
    return f


def _full_add_column(f: QRFactor, col, j):
    m, n = f.R.shape
    if m < n + 1:
        raise RankDeficientError("no room for another independent column")
    w = f.Q.T @ np.asarray(col, dtype=float)
    f.R = np.insert(f.R, j, w, axis=1)
    # zero w below row j, bottom-up; the shifted trailing block fills its diagonal
    for t in range(m - 1, j, -1):
        _zero_row_entry(f.R, f.Q, t - 1, t, j, start=j)
    f.scale = max(f.scale, float(np.max(np.abs(col), initial=0.0)))
    f._check_rank()
    f._fix_signs()
    return f


def _full_remove_column(f: QRFactor, j):
    f.R = np.delete(f.R, j, axis=1)
    m, n = f.R.shape
    # trailing block is upper Hessenberg from column j on
    for t in range(j, min(n, m - 1)):
        _zero_row_entry(f.R, f.Q, t, t + 1, t, start=t)
    f._fix_signs()
    return f


def _rot_add_row(f: RotatedQRFactor, w, index):
    m, n = f.R.shape
    k = f.k
    w = np.asarray(w, dtype=float)
    f.scale = max(f.scale, float(np.max(np.abs(w), initial=0.0)))
    d = f.G.T @ w[f.perm]
    Rs = np.vstack([d, f.R])
    f.Q = _embed_row(f.Q, index)
    f.R = Rs
    nk = n - k
    # collapse d1 into its last slot; those columns of R are zero below row 0
    for t in range(nk - 1):
        _zero_col_entry(Rs, f.G, 0, t, t + 1, stop=1)
    tol = rank_tolerance(m + 1, n, f.scale)
    if nk >= 1 and abs(Rs[0, nk - 1]) > tol:
        # rank grows: [[delta, d2], [0, R1]] is already triangular
        f.k = k + 1
    else:
        if nk >= 1:
            Rs[0, :nk] = 0.0
        for j in range(k):
            col = nk + j
            _zero_row_entry(Rs, f.Q, j + 1, 0, col, start=col)
        Rs[0, :] = 0.0
        f.R = np.roll(Rs, -1, axis=0)
        f.Q = np.roll(f.Q, -1, axis=1)
    f._fix_signs()
    return f


def _restore_after_drop(f: RotatedQRFactor):
    """Repair ``[0 R1]`` after a row deletion made a pivot of R1 vanish.

    Zero rows are padded below R when the deletion left fewer than ``k``
    rows; rotations never touch them since their entries are zero.
    """
    while f.k > 0:
        m, n = f.R.shape
        k = f.k
        R = f.R if m >= k else np.vstack([f.R, np.zeros((k - m, n))])
        base = n - k
        diag = np.abs(np.diag(R[:k, base:]))
        bad = np.flatnonzero(diag <= f.tol)
        if bad.size == 0:
            return
        q = int(bad[0])
        R[q:, base + q] = 0.0
        # rows q..k-1 are upper Hessenberg past the zero pivot
        for j in range(q, k - 1):
            col = base + j + 1
            _zero_row_entry(R, f.Q, j, j + 1, col, start=col - 1)
        # the leading q x (q+1) trapezoid: sweep its first column out
        for j in range(q - 1, -1, -1):
            _zero_col_entry(R, f.G, j, base + j, base + j + 1, stop=j + 1)
        R[:, base] = 0.0
        R[k - 1 :, :] = 0.0
        f.R = R[:m] if R is not f.R else R
        f.k = k - 1
        f._fix_signs()


def _rot_remove_row(f: RotatedQRFactor, index):
    f.R, f.Q = _delete_row_of_q(f.R, f.Q, index)
    _restore_after_drop(f)
    return f


def update_add_row(f, w, index: int):
    """Insert ``w`` so that it becomes row ``index`` (0-based) of the factored matrix.

    Full-rank factors use ``n`` rotations; rotated factors detect whether the
    rank grows (nonzero leading part of ``G^T P^T w``) and branch accordingly.
    """
    w = np.asarray(w, dtype=float)
    if isinstance(f, QRFactor):
        if w.shape != (f.n,):
            raise ValueError(f"row has shape {w.shape}, expected ({f.n},)")
        _check_index(index, f.m)
        return _full_add_row(f, w, index)
    if f.transposed:
        raise TypeError("rows of a transposed factor are columns of the stored matrix")
    if w.shape != (f.n,):
        raise ValueError(f"row has shape {w.shape}, expected ({f.n},)")
    _check_index(index, f.m)
    return _rot_add_row(f, w, index)


def update_remove_row(f, index: int):
    """Delete row ``index`` (0-based) of the factored matrix."""
    if isinstance(f, QRFactor):
        _check_index(index, f.m - 1)
        return _full_remove_row(f, index)
    if f.transposed:
        raise TypeError("rows of a transposed factor are columns of the stored matrix")
    _check_index(index, f.m - 1)
    return _rot_remove_row(f, index)


def update_column(f, action: str, column=None, index: int = 0):
    """Add or remove column ``index`` (0-based) of the factored matrix ``A``.

    For a :class:`QRFactor` this is the full-rank column update. For a
    transposed :class:`RotatedQRFactor` (which stores ``A^T``) the column
    change is carried out as a row change of ``A^T``.
    """
    if action not in ("add", "remove"):
        raise ValueError(f"action must be 'add' or 'remove', got {action!r}")
    if isinstance(f, QRFactor):
        if action == "add":
            column = np.asarray(column, dtype=float)
            if column.shape != (f.m,):
                raise ValueError(f"column has shape {column.shape}, expected ({f.m},)")
            _check_index(index, f.n)
            return _full_add_column(f, column, index)
        _check_index(index, f.n - 1)
        return _full_remove_column(f, index)
    if not f.transposed:
        raise TypeError("column updates need a transposed rotated factor")
    if action == "add":
        column = np.asarray(column, dtype=float)
        if column.shape != (f.n,):
            raise ValueError(f"column has shape {column.shape}, expected ({f.n},)")
        _check_index(index, f.m)
        return _rot_add_row(f, column, index)
    _check_index(index, f.m - 1)
    return _rot_remove_row(f, index)
