"""Dual path algorithm for the generalized lasso.

The dual of  min_b 1/2 ||y - X b||^2 + lam ||D b||_1  is tracked from
lam = infinity down to 0.  Between knots the dual solution is linear in lam:
interior coordinates follow u = a - lam * b and boundary coordinates sit at
lam * s.  At each knot one coordinate hits the boundary or leaves it.

The per-step linear algebra lives in a *stepper*: given the current boundary
set and signs it returns (a, b) on the interior rows plus the two vectors
(c, d) whose sign pattern decides when a boundary row leaves.  The X = I
stepper below wraps any of the least-squares backends; the general-X
stepper lives in ``general_x``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .backend_base import Backend, NumericalFailure
from .generic_backend import GenericBackend
from .graph_backend import GraphBackend
from .operators import FusedGraph, SparseFusedGraph, TrendFilter
from .tf_backend import TrendFilterBackend

log = logging.getLogger(__name__)

TIE_RTOL = 1e-12
# a first knot this small relative to ||y|| is roundoff: y is already in null(D)
ZERO_RTOL = 1e-11
DEFAULT_MAX_STEPS = 2000


@dataclass(frozen=True)
class PathKnot:
    """A knot: value of lambda, what happened there, and df afterwards.

    ``event`` is "hit", "leave" or "none" (the single knot of a path whose
    first knot is already 0).  ``sign`` is 0 unless the event is a hit.
    """

    lam: float
    event: str
    coordinate: int
    sign: int
    df: int


@dataclass
class DualSegment:
    """Dual solution on [lam_lo, lam_hi].  a and b may be None when a path
    is run without storage (benchmarks)."""

    lam_hi: float
    lam_lo: float
    interior: np.ndarray
    boundary: np.ndarray
    signs: np.ndarray
    a: np.ndarray | None
    b: np.ndarray | None

    def dual(self, lam: float, m: int) -> np.ndarray:
        if self.a is None:
            raise RuntimeError("path was computed without storing dual coefficients")
        u = np.zeros(m)
        u[self.interior] = self.a - lam * self.b
        u[self.boundary] = lam * self.signs
        return u


class PathRangeError(ValueError):
    def __init__(self, lam, lam_min):
        super().__init__(f"lambda {lam} is below the computed range; smallest valid lambda is {lam_min}")
        self.lam_min = lam_min


@dataclass
class SolutionPath:
    y: np.ndarray
    D: object  # sparse matrix of the original problem
    spec: object
    knots: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    termination: str = ""
    design: object = None
    df0: int = 0  # nullity of D, i.e. df above the first knot

    @property
    def m(self) -> int:
        return self.D.shape[0]

    @property
    def p(self) -> int:
        return self.D.shape[1]

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([k.lam for k in self.knots])

    @property
    def lambda_min(self) -> float:
        """Smallest lambda at which the solution is known."""
        if not self.segments:
            return np.inf
        return self.segments[-1].lam_lo

    def segment_index(self, lam: float) -> int:
        if lam < self.lambda_min * (1 - TIE_RTOL) - 1e-300 or not self.segments:
            raise PathRangeError(lam, self.lambda_min)
        lo = np.array([s.lam_lo for s in self.segments])
        # segments run downward; the first one whose lower end is <= lam
        idx = int(np.searchsorted(-lo, -lam, side="left"))
        return min(idx, len(self.segments) - 1)

    def dual_at(self, lam: float) -> np.ndarray:
        seg = self.segments[self.segment_index(lam)]
        return seg.dual(lam, self.m)

    def primal_at(self, lam: float) -> np.ndarray:
        u = self.dual_at(lam)
        if self.design is None:
            return self.y - self.D.T @ u
        return self.design.primal(self.y, self.D, u)

    def df_at(self, lam: float) -> int:
        """df of the segment containing lam (df of the state after the knot above it)."""
        idx = self.segment_index(lam)
        return self.nullity_of_segment(idx)

    def nullity_of_segment(self, idx: int) -> int:
        if idx == 0:
            return self.df0
        return self.knots[idx - 1].df


# -- hitting and leaving ----------------------------------------------------

def hitting_times(a: np.ndarray, b: np.ndarray, lam: float, rtol: float = TIE_RTOL):
    """Next time an interior coordinate reaches +-lam below the current knot.

    Coordinate i reaches sign sigma at t = sigma*a_i / (sigma*b_i + 1).  Only
    candidates with a positive denominator are genuine: with a non-positive
    one the coordinate moves away from (or parallel to) that side of the box
    as lam decreases.  Candidates in (0, lam*(1+rtol)] qualify and are
    clamped to lam.  Returns (t, position, sign) with position an index into
    a; t = 0 and position = -1 when nothing qualifies.  Ties within
    rtol*lam go to the lowest position.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.size == 0:
        return 0.0, -1, 0
    best = np.zeros(a.size)
    sign = np.zeros(a.size, dtype=np.int64)
    cap = lam * (1 + rtol)
    for sigma in (1, -1):
        den = sigma * b + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(den > 0, sigma * a / den, 0.0)
        ok = (t > 0) & (t <= cap)
        t = np.where(ok, np.minimum(t, lam), 0.0)
        better = t > best
        best = np.where(better, t, best)
        sign = np.where(better, sigma, sign)
    top = best.max()
    if top <= 0:
        return 0.0, -1, 0
    pos = int(np.flatnonzero(best >= top - rtol * lam)[0])
    return float(best[pos]), pos, int(sign[pos])


def leaving_times(c: np.ndarray, d: np.ndarray, lam: float, rtol: float = TIE_RTOL):
    """Next time a boundary row stops satisfying its sign condition.

    Row i (position in B) keeps s_i (D beta)_i = c_i - lam' d_i >= 0 until
    lam' = c_i / d_i, which lies below lam only when c_i < 0 and d_i < 0.
    Returns (t, position) with t = 0, position = -1 when no row leaves.
    """
    c = np.asarray(c, float)
    d = np.asarray(d, float)
    if c.size == 0:
        return 0.0, -1
    cap = lam * (1 + rtol)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where((c < 0) & (d < 0), c / d, 0.0)
    t = np.where((t > 0) & (t <= cap), np.minimum(t, lam), 0.0)
    top = t.max()
    if top <= 0:
        return 0.0, -1
    pos = int(np.flatnonzero(t >= top - rtol * lam)[0])
    return float(t[pos]), pos


# -- steppers ---------------------------------------------------------------

LEAVE_RTOL = 1e-9


def boundary_rates(D, row_l1, B, signs, v_c, v_d, ref_c=0.0, ref_d=0.0):
    """c = s * D_B v_c and d = s * D_B v_d with roundoff flushed to zero.

    A boundary row lying in the row space of D_{-B} has c = d = 0 exactly
    (its value of D beta is pinned by the interior rows), but the computed
    values come out as +-1e-15 noise and a noisy negative pair would fake a
    leave.  Entries below LEAVE_RTOL * ||D_i||_1 * scale are zeroed, where
    scale is the larger of ||v||_inf and the size ``ref`` of whatever v is a
    residual of (v itself can be pure noise, e.g. when beta is 0).
    """
    # a full product is cheaper than extracting the rows D_B from CSR
    c = signs * (D @ v_c)[B]
    d = signs * (D @ v_d)[B]
    sc = max(np.abs(v_c).max(initial=0.0), ref_c)
    sd = max(np.abs(v_d).max(initial=0.0), ref_d)
    c[np.abs(c) <= LEAVE_RTOL * row_l1[B] * sc] = 0.0
    d[np.abs(d) <= LEAVE_RTOL * row_l1[B] * sd] = 0.0
    return c, d


class IdentityStepper:
    """Step quantities for X = I on top of a least-squares backend."""

    def __init__(self, y: np.ndarray, backend: Backend):
        self.y = np.asarray(y, float)
        self.backend = backend
        self.D = backend.D
        self.Dt = backend.D.T.tocsr()
        self.m, self.p = backend.m, backend.p
        self.row_l1 = np.asarray(abs(self.D).sum(axis=1)).ravel()
        self.y_scale = np.abs(self.y).max(initial=0.0)
        self.scale = np.linalg.norm(self.y)

    def quantities(self, signs: np.ndarray):
        be = self.backend
        B, I = be.boundary, be.interior
        a = be.solve(self.y)
        if B.size == 0:
            return a, np.zeros_like(a), np.zeros(0), np.zeros(0)
        u = np.zeros(self.m)
        u[B] = signs
        DBs = self.Dt @ u
        b = be.solve(DBs)
        ua = np.zeros(self.m)
        ua[I] = a
        ub = np.zeros(self.m)
        ub[I] = b
        c, d = boundary_rates(self.D, self.row_l1, B, signs,
                              self.y - self.Dt @ ua, DBs - self.Dt @ ub,
                              self.y_scale, np.abs(DBs).max())
        return a, b, c, d


def make_backend(spec, kind: str = "auto") -> Backend:
    if kind == "auto":
        if isinstance(spec, TrendFilter):
            kind = "tf"
        elif isinstance(spec, (FusedGraph, SparseFusedGraph)):
            kind = "graph"
        else:
            kind = "generic"
    if kind == "tf":
        return TrendFilterBackend(spec)
    if kind == "graph":
        return GraphBackend(spec)
    if kind == "generic":
        return GenericBackend(spec)
    raise ValueError(f"unknown backend {kind!r}")


class PathAborted(RuntimeError):
    """Numerical failure mid-path; ``path`` holds everything computed so far."""

    def __init__(self, path: SolutionPath, step: int, cause: Exception):
        super().__init__(f"path aborted at step {step}: {cause}")
        self.path = path
        self.step = step
        self.cause = cause


def run_path(
    y,
    spec,
    backend: Backend | str = "auto",
    max_steps: int = DEFAULT_MAX_STEPS,
    min_lambda: float = 0.0,
    max_df: int | None = None,
    store: bool = True,
) -> SolutionPath:
    """Solution path for X = I.

    Runs until lambda reaches 0 or a stopping rule fires: ``max_steps``
    knots recorded, next knot below ``min_lambda`` (the last segment is then
    cut at min_lambda), or df after a knot above ``max_df``.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size != spec.p:
        raise ValueError(f"y has length {y.size} but the penalty has {spec.p} columns")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    if isinstance(backend, str):
        backend = make_backend(spec, backend)
    path = SolutionPath(y=y, D=spec.matrix, spec=spec)
    return trace_path(IdentityStepper(y, backend), path, max_steps, min_lambda, max_df, store)


def trace_path(stepper, path: SolutionPath, max_steps=DEFAULT_MAX_STEPS, min_lambda=0.0,
               max_df=None, store=True) -> SolutionPath:
    be = stepper.backend
    m = stepper.m
    max_df = np.inf if max_df is None else max_df
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    signs = {}

    def sign_array():
        return np.array([signs[i] for i in be.boundary], dtype=float)

    def segment(hi, lo, a, b):
        keep = store
        path.segments.append(
            DualSegment(hi, lo, be.interior.copy(), be.boundary.copy(), sign_array(),
                        a if keep else None, b if keep else None)
        )

    step = 0
    try:
        path.df0 = be.nullity()
        a, b, _, _ = stepper.quantities(sign_array())
        lam = float(np.abs(a).max(initial=0.0))
        if lam <= ZERO_RTOL * stepper.scale:
            a = np.zeros_like(a)
            segment(np.inf, 0.0, a, a)
            path.knots.append(PathKnot(0.0, "none", -1, 0, path.df0))
            path.termination = "lambda_zero"
            return path
        pos = int(np.flatnonzero(np.abs(a) >= lam * (1 - TIE_RTOL))[0])
        segment(np.inf, lam, a, np.zeros_like(a))
        i, sgn = int(be.interior[pos]), int(np.sign(a[pos]))
        be.add_boundary(i)
        signs[i] = sgn
        path.knots.append(PathKnot(lam, "hit", i, sgn, be.nullity()))
        step = 1
        if path.knots[-1].df > max_df:
            path.termination = "max_df"
            return path

        while True:
            if step >= max_steps:
                path.termination = "max_steps"
                break
            s = sign_array()
            a, b, c, d = stepper.quantities(s)
            t_hit, h_pos, h_sign = hitting_times(a, b, lam)
            t_leave, l_pos = leaving_times(c, d, lam)
            if t_hit <= 0 and t_leave <= 0:
                segment(lam, 0.0, a, b)
                path.termination = "lambda_zero"
                break
            t = max(t_hit, t_leave)
            if t < min_lambda:
                segment(lam, float(min_lambda), a, b)
                path.termination = "min_lambda"
                break
            segment(lam, t, a, b)
            if t_hit >= t_leave:
                i = int(be.interior[h_pos])
                be.add_boundary(i)
                signs[i] = h_sign
                knot = PathKnot(t, "hit", i, h_sign, be.nullity())
            else:
                i = int(be.boundary[l_pos])
                be.remove_boundary(i)
                del signs[i]
                knot = PathKnot(t, "leave", i, 0, be.nullity())
            path.knots.append(knot)
            lam = t
            step += 1
            if knot.df > max_df:
                path.termination = "max_df"
                break
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        path.termination = "aborted"
        log.warning("path aborted at step %d: %s", step + 1, exc)
        raise PathAborted(path, step + 1, exc) from exc
    return path


def primal_at(path: SolutionPath, lam: float) -> np.ndarray:
    return path.primal_at(lam)
