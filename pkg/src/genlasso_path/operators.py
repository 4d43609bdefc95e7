"""Penalty matrices for the generalized lasso.

A penalty is described by one of four small spec objects:

    TrendFilter(order, p)               (k+1)-st order differences
    FusedGraph(p, edges)                oriented incidence matrix of a graph
    SparseFusedGraph(p, edges, alpha)   incidence matrix stacked over alpha * I
    Custom(m, p, rows, cols, vals)      arbitrary sparse triplets

All indices in this module are 0-based.  Matrices come back in CSR form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class UnsupportedPenalty(TypeError):
    """Raised when an operation needs structure a Custom penalty lacks."""


def diff_coefficients(k: int) -> np.ndarray:
    """Entries of one row of D^(k+1): (-1)^(k+1-j) * binom(k+1, j), j = 0..k+1."""
    return np.array([(-1) ** (k + 1 - j) * comb(k + 1, j) for j in range(k + 2)], dtype=float)


def build_diff_operator(k: int, p: int) -> sp.csr_matrix:
    """(k+1)-st order difference operator as a sparse (p-k-1) x p matrix.

    Row i holds (-1)^(k+1-j) * binom(k+1, j) in column i + j, j = 0..k+1,
    so the first row for k = 1 is (1, -2, 1, 0, ...).  When p <= k + 1 the
    operator has no rows.
    """
    if k < 0:
        raise ValueError(f"order must be nonnegative, got {k}")
    if p < 1:
        raise ValueError(f"p must be positive, got {p}")
    m = max(p - k - 1, 0)
    coef = diff_coefficients(k)
    if m == 0:
        return sp.csr_matrix((0, p))
    rows = np.repeat(np.arange(m), k + 2)
    cols = (np.arange(m)[:, None] + np.arange(k + 2)[None, :]).ravel()
    vals = np.tile(coef, m)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, p))


def normalize_edges(p: int, edges) -> np.ndarray:
    """Validate an edge list and orient every edge as (i, j) with i < j."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2) if len(edges) else np.zeros((0, 2), np.int64)
    if e.size:
        if e.min() < 0 or e.max() >= p:
            bad = int(np.flatnonzero((e < 0).any(1) | (e >= p).any(1))[0])
            raise ValueError(f"edge {bad} = {tuple(e[bad])} has an endpoint outside 0..{p - 1}")
        loops = np.flatnonzero(e[:, 0] == e[:, 1])
        if loops.size:
            raise ValueError(f"edge {int(loops[0])} is a self-loop on node {int(e[loops[0], 0])}")
    return np.sort(e, axis=1)


def build_incidence(p: int, edges) -> sp.csr_matrix:
    """Oriented incidence matrix: row l has -1 at i and +1 at j for edge (i, j)."""
    e = normalize_edges(p, edges)
    m = e.shape[0]
    rows = np.repeat(np.arange(m), 2)
    cols = e.ravel()
    vals = np.tile([-1.0, 1.0], m)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, p))


def chain_edges(p: int) -> np.ndarray:
    return np.column_stack([np.arange(p - 1), np.arange(1, p)])


def grid_edges(rows: int, cols: int) -> np.ndarray:
    """4-neighbour grid, nodes numbered row-major."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return np.vstack([horiz, vert])


@dataclass(frozen=True, eq=False)
class TrendFilter:
    order: int
    p: int

    def __post_init__(self):
        if self.order < 0:
            raise ValueError(f"order must be nonnegative, got {self.order}")
        if self.p < 1:
            raise ValueError(f"p must be positive, got {self.p}")

    @property
    def m(self) -> int:
        return max(self.p - self.order - 1, 0)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return build_diff_operator(self.order, self.p)


@dataclass(frozen=True, eq=False)
class FusedGraph:
    p: int
    edges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "edges", normalize_edges(self.p, self.edges))

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return build_incidence(self.p, self.edges)


@dataclass(frozen=True, eq=False)
class SparseFusedGraph:
    p: int
    edges: np.ndarray
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "edges", normalize_edges(self.p, self.edges))

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def m(self) -> int:
        return self.n_edges + self.p

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        inc = build_incidence(self.p, self.edges)
        return sp.vstack([inc, self.alpha * sp.identity(self.p, format="csr")], format="csr")


@dataclass(frozen=True, eq=False)
class Custom:
    m: int
    p: int
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    cols: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    vals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        vals = np.asarray(self.vals, dtype=float)
        if not rows.shape == cols.shape == vals.shape:
            raise ValueError("triplet arrays must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.m):
            raise ValueError(f"row index outside 0..{self.m - 1}")
        if cols.size and (cols.min() < 0 or cols.max() >= self.p):
            raise ValueError(f"column index outside 0..{self.p - 1}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite value in penalty matrix")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "vals", vals)

    @classmethod
    def from_matrix(cls, D) -> Custom:
        C = sp.coo_matrix(D)
        return cls(C.shape[0], C.shape[1], C.row, C.col, C.data)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.m, self.p))


PenaltySpec = Union[TrendFilter, FusedGraph, SparseFusedGraph, Custom]


@dataclass(frozen=True, eq=False)
class BoundaryPartition:
    """Boundary rows B (sorted) with their signs s.

    For a sparse fused penalty, rows below the edge count are edges (B1)
    and the rest are the alpha * I rows, i.e. nodes (B2).
    """

    B: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=np.int64).ravel()
        s = np.asarray(self.s, dtype=float).ravel()
        if B.shape != s.shape:
            raise ValueError(f"B has {B.size} entries but s has {s.size}")
        order = np.argsort(B, kind="stable")
        B, s = B[order], s[order]
        if B.size and np.any(np.diff(B) == 0):
            raise ValueError("duplicate boundary index")
        if s.size and not np.all(np.abs(s) == 1):
            raise ValueError("signs must be +1 or -1")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "s", s)

    @classmethod
    def empty(cls) -> BoundaryPartition:
        return cls(np.zeros(0, np.int64), np.zeros(0))

    def __len__(self) -> int:
        return self.B.size

    def interior(self, m: int) -> np.ndarray:
        mask = np.ones(m, bool)
        mask[self.B] = False
        return np.flatnonzero(mask)

    def split(self, n_edges: int):
        """Return (B1, s1, B2, s2): edge rows and node rows, nodes re-based to 0."""
        e = self.B < n_edges
        return self.B[e], self.s[e], self.B[~e] - n_edges, self.s[~e]


def _as_indices(B) -> np.ndarray:
    if isinstance(B, BoundaryPartition):
        return B.B
    return np.asarray(B, dtype=np.int64).ravel()


def component_labels(p: int, edges: np.ndarray) -> np.ndarray:
    """Connected component labels, numbered by smallest member node."""
    if edges.shape[0] == 0:
        return np.arange(p)
    A = sp.coo_matrix((np.ones(edges.shape[0]), (edges[:, 0], edges[:, 1])), shape=(p, p))
    _, lab = connected_components(A, directed=False)
    # relabel so that components appear in order of their first node
    _, first = np.unique(lab, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(order.size)
    return remap[lab]


def _indicators(labels: np.ndarray, keep: np.ndarray | None = None) -> np.ndarray:
    q = labels.max() + 1 if labels.size else 0
    H = np.zeros((labels.size, q), dtype=np.int64)
    H[np.arange(labels.size), labels] = 1
    if keep is not None:
        H = H[:, keep]
    return H


def _tf_null_basis(k: int, p: int, B: np.ndarray) -> np.ndarray:
    # polynomial part: repeated cumulative sums of the ones vector
    v = [np.ones(p, dtype=np.int64)]
    for _ in range(k):
        v.append(np.cumsum(v[-1]))
    cols = list(v)
    vk = v[-1]
    for b in B:
        start = b + k + 1
        col = np.zeros(p, dtype=np.int64)
        col[start:] = vk[: p - start]
        cols.append(col)
    return np.column_stack(cols)


def _sparse_fused_keep(spec: SparseFusedGraph, B: np.ndarray):
    """Labels of G restricted to interior edges, and which components are
    entirely made of boundary nodes (only those carry a null direction)."""
    n_e = spec.n_edges
    B1 = B[B < n_e]
    B2 = B[B >= n_e] - n_e
    mask = np.ones(n_e, bool)
    mask[B1] = False
    labels = component_labels(spec.p, spec.edges[mask])
    q = labels.max() + 1 if labels.size else 0
    free = np.zeros(spec.p, bool)
    free[B2] = True
    # a component survives iff every node in it is a boundary node
    bad = np.bincount(labels[~free], minlength=q) > 0
    return labels, np.flatnonzero(~bad)


def _checked(spec: PenaltySpec, B) -> np.ndarray:
    B = np.sort(_as_indices(B))
    if B.size and (B[0] < 0 or B[-1] >= spec.m):
        raise IndexError(f"boundary index outside 0..{spec.m - 1}")
    return B


def null_basis(spec: PenaltySpec, B=()) -> np.ndarray:
    """Integer-valued basis H of null(D_{-B}) as a float p x q array.

    The basis is checked against D_{-B} in exact integer arithmetic before
    being returned.
    """
    B = _checked(spec, B)
    if isinstance(spec, TrendFilter):
        if spec.m == 0:
            return np.eye(spec.p)
        H = _tf_null_basis(spec.order, spec.p, B)
        Dint = spec.matrix
    elif isinstance(spec, FusedGraph):
        mask = np.ones(spec.m, bool)
        mask[B] = False
        H = _indicators(component_labels(spec.p, spec.edges[mask]))
        Dint = spec.matrix
    elif isinstance(spec, SparseFusedGraph):
        labels, keep = _sparse_fused_keep(spec, B)
        H = _indicators(labels, keep)
        # alpha rows are checked as identity rows so the test stays exact
        Dint = sp.vstack([build_incidence(spec.p, spec.edges), sp.identity(spec.p)], format="csr")
    else:
        raise UnsupportedPenalty(
            f"no structured null basis for {type(spec).__name__}; use the generic backend"
        )
    interior = np.setdiff1d(np.arange(spec.m), B)
    if interior.size and H.shape[1]:
        if (Dint[interior].astype(np.int64) @ H).any():
            raise ArithmeticError("constructed null basis is not annihilated by D_{-B}")
    return H.astype(float)


def nullity(spec: PenaltySpec, B=()) -> int:
    """dim null(D_{-B}) for structured penalties."""
    B = _checked(spec, B)
    if isinstance(spec, TrendFilter):
        return spec.p if spec.p <= spec.order + 1 else spec.order + 1 + B.size
    if isinstance(spec, FusedGraph):
        mask = np.ones(spec.m, bool)
        mask[B] = False
        return int(component_labels(spec.p, spec.edges[mask]).max(initial=-1) + 1)
    if isinstance(spec, SparseFusedGraph):
        return int(_sparse_fused_keep(spec, B)[1].size)
    raise UnsupportedPenalty(f"nullity of a {type(spec).__name__} penalty needs a factorization")
