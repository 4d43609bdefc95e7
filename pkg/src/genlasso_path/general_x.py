"""Generalized lasso with a full-column-rank design matrix X.

Two routes are offered.

``route="generic"`` rewrites the problem with y~ = X X^+ y and D~ = D X^+ and
runs the X = I algorithm with the generic QR backend.

``route="specialized"`` keeps the structured D.  With H a basis of
null(D_{-B}), every step needs only

    theta = argmin ||y - X H theta||,   phi = (H^T X^T X H)^{-1} H^T D_B^T s,
    v = X^T (y - X H theta),            w = D_B^T s - X^T X H phi,

followed by the structured X = I solver applied to v and w.  The only
factorization touching X is a QR of the n x q matrix X H.  On a segment the
primal solution is beta = H (theta - lam * phi), which also gives the leaving
rates without any p x p solve.  X's own QR is built lazily, only when a
primal solution at an arbitrary lambda is requested.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .backend_base import NumericalFailure
from .generic_backend import GenericBackend
from .givens_qr import rank_tolerance
from .operators import Custom, null_basis
from .path_core import (
    DEFAULT_MAX_STEPS,
    IdentityStepper,
    SolutionPath,
    boundary_rates,
    make_backend,
    trace_path,
)


class RankDeficientDesign(ValueError):
    def __init__(self, rank, p):
        super().__init__(
            f"X has numerical rank {rank} < p = {p}; use ridge_augment to add a small ridge term"
        )


class DesignMatrix:
    """An n x p design with its QR factor built on first use.

    ``log`` records every factorization involving X as (stage, what, size),
    where size is the order of the triangular system it produces.
    """

    def __init__(self, X, check_rank: bool = True):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        self.X = X
        self.n, self.p = X.shape
        self.log = []
        self.stage = "setup"
        if self.n < self.p:
            raise RankDeficientDesign(self.n, self.p)
        if check_rank:
            self.check_rank()

    @cached_property
    def qr(self):
        self.log.append((self.stage, "qr(X)", self.p))
        Q1, R = sla.qr(self.X, mode="economic")
        return Q1, R

    def rank(self) -> int:
        _, R = self.qr
        tol = rank_tolerance(self.n, self.p, np.abs(self.X).max(initial=0.0))
        return int(np.sum(np.abs(np.diag(R)) > tol))

    def check_rank(self):
        r = self.rank()
        if r < self.p:
            raise RankDeficientDesign(r, self.p)

    def pinv_apply_T(self, M: np.ndarray) -> np.ndarray:
        """M X^+ for a k x p matrix M, computed as (M R^{-1}) Q1^T."""
        Q1, R = self.qr
        MR = sla.solve_triangular(R, np.asarray(M, float).T, trans="T").T
        return MR @ Q1.T

    def primal(self, y, D, u) -> np.ndarray:
        """beta solving X^T X beta = X^T y - D^T u."""
        stage, self.stage = self.stage, "primal"
        Q1, R = self.qr
        self.stage = stage
        rhs = self.X.T @ y - D.T @ u
        z = sla.solve_triangular(R, rhs, trans="T")
        return sla.solve_triangular(R, z)


def transform_generic(y, X, D, design: DesignMatrix | None = None):
    """(y~, D~) = (X X^+ y, D X^+) via the QR factor of X."""
    dm = design if design is not None else DesignMatrix(X)
    Q1, _ = dm.qr
    y = np.asarray(y, float)
    Dd = D.toarray() if hasattr(D, "toarray") else np.asarray(D, float)
    return Q1 @ (Q1.T @ y), dm.pinv_apply_T(Dd)


def ridge_augment(y, X, eps: float):
    """Stack sqrt(2 eps) I under X and pad y with zeros.

    Solving the augmented problem adds eps * ||beta||^2 to the criterion,
    and the augmented design has full column rank for any X.
    """
    if not eps > 0:
        raise ValueError(f"ridge parameter must be positive, got {eps}")
    X = np.asarray(X, float)
    p = X.shape[1]
    return np.concatenate([np.asarray(y, float), np.zeros(p)]), np.vstack([X, np.sqrt(2 * eps) * np.eye(p)])


def project_through_design(c, X, H) -> np.ndarray:
    """X^T (I - P_{XH}) c, solving only a q x q triangular system.

    P_{XH} is the projection onto the column space of X H.  Raises when X H
    does not have full column rank.
    """
    X = np.asarray(X, float)
    c = np.asarray(c, float)
    if H.shape[1] == 0:
        return X.T @ c
    Qq, _ = _xh_qr(X @ H, np.abs(X).max(initial=1.0))
    return X.T @ (c - Qq @ (Qq.T @ c))


def _xh_qr(XH: np.ndarray, xscale: float):
    Qq, Rq = sla.qr(XH, mode="economic")
    q = XH.shape[1]
    scale = np.abs(XH).max(initial=0.0)
    if q and np.any(np.abs(np.diag(Rq)) <= rank_tolerance(XH.shape[0], q, max(scale, xscale))):
        raise NumericalFailure(
            "X H is rank deficient: X is not of full column rank on null(D_{-B})"
        )
    return Qq, Rq


class GeneralXStepper:
    """Step quantities for the specialized route (structured D, general X)."""

    def __init__(self, y, design: DesignMatrix, spec, backend):
        self.y = np.asarray(y, float)
        self.design = design
        self.X = design.X
        self.spec = spec
        self.backend = backend
        self.D = spec.matrix
        self.Dt = self.D.T.tocsr()
        self.m, self.p = spec.m, spec.p
        self.row_l1 = np.asarray(abs(self.D).sum(axis=1)).ravel()
        self.Xty = self.X.T @ self.y
        self.scale = np.linalg.norm(self.Xty)
        self.xscale = np.abs(self.X).max(initial=1.0)
        self.max_system = 0

    def quantities(self, signs):
        be = self.backend
        B = be.boundary
        H = null_basis(self.spec, B)
        q = H.shape[1]
        if q:
            XH = self.X @ H
            Qq, Rq = _xh_qr(XH, self.xscale)
            self.design.log.append(("path", "qr(XH)", q))
            self.max_system = max(self.max_system, q)
            theta = sla.solve_triangular(Rq, Qq.T @ self.y)
            fit = XH @ theta
        else:
            theta = np.zeros(0)
            fit = np.zeros(self.X.shape[0])
        v = self.X.T @ (self.y - fit)
        a = be.solve(v)
        if B.size == 0:
            return a, np.zeros_like(a), np.zeros(0), np.zeros(0)
        u = np.zeros(self.m)
        u[B] = signs
        DBs = self.Dt @ u
        if q:
            z = sla.solve_triangular(Rq, H.T @ DBs, trans="T")
            phi = sla.solve_triangular(Rq, z)
            w = DBs - self.X.T @ (XH @ phi)
            beta0, beta1 = H @ theta, H @ phi
        else:
            w = DBs
            beta0 = beta1 = np.zeros(self.p)
        b = be.solve(w)
        ref = np.abs(beta0).max(initial=0.0)
        c, d = boundary_rates(self.D, self.row_l1, B, signs, beta0, beta1, ref, 0.0)
        return a, b, c, d


def run_path_general_x(
    y,
    X,
    spec,
    route: str = "specialized",
    backend="auto",
    max_steps: int = DEFAULT_MAX_STEPS,
    min_lambda: float = 0.0,
    max_df=None,
    ridge: float | None = None,
    check_rank: bool = True,
    store: bool = True,
) -> SolutionPath:
    """Solution path of  1/2 ||y - X beta||^2 + lam ||D beta||_1.

    ``ridge`` > 0 first augments X (see ``ridge_augment``), which makes any X
    usable.  ``check_rank`` verifies full column rank up front; turning it
    off defers the only factorization of X to the first primal evaluation.
    """
    y = np.asarray(y, float).ravel()
    X = np.asarray(X, float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"X must have {y.size} rows to match y")
    if X.shape[1] != spec.p:
        raise ValueError(f"X has {X.shape[1]} columns but the penalty has {spec.p}")
    if ridge is not None:
        y, X = ridge_augment(y, X, ridge)
    design = DesignMatrix(X, check_rank=check_rank)
    design.stage = "path"
    path = SolutionPath(y=y, D=spec.matrix, spec=spec, design=design)
    try:
        if route == "specialized":
            be = make_backend(spec, backend) if isinstance(backend, str) else backend
            stepper = GeneralXStepper(y, design, spec, be)
        elif route == "generic":
            yt, Dt = transform_generic(y, X, spec.matrix, design)
            tspec = Custom.from_matrix(Dt)
            be = GenericBackend(tspec, df_offset=spec.p - X.shape[0])
            stepper = IdentityStepper(yt, be)
        else:
            raise ValueError(f"unknown route {route!r}")
        return trace_path(stepper, path, max_steps, min_lambda, max_df, store)
    finally:
        design.stage = "done"


def primal_general_x(path: SolutionPath, lam: float) -> np.ndarray:
    return path.primal_at(lam)
