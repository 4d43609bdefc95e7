"""Fused lasso backend on graphs (plain and sparse fused).

With D the oriented incidence matrix, D_{-B}^T D_{-B} is the Laplacian of
G_{-B} (the graph with the boundary edges cut).  The min-norm solution of
||c - D_{-B}^T a|| is a = D_{-B} z for any z with

    D_{-B}^T D_{-B} z = (I - P_null) c,

and the projection onto null(D_{-B}) is a componentwise mean.  The
Laplacian system splits into one block per connected component; each block
is singular with a one-dimensional null space, so the highest-numbered node
of every component is pinned to zero and the remaining nonsingular system is
solved directly.

For the sparse fused lasso the Gram matrix gains alpha^2 on the diagonal of
every node whose alpha-row is interior.  Components holding such a node are
nonsingular and are solved whole; only components made entirely of boundary
nodes keep a null direction.
"""
from __future__ import annotations

from collections import deque

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .backend_base import Backend, NumericalFailure
from .operators import FusedGraph, SparseFusedGraph, component_labels

MEAN_RTOL = 1e-9


class ComponentLabeling:
    """Connected components of a graph under edge insertions and deletions.

    Deleting an edge runs two breadth-first searches from its endpoints in
    lockstep.  If they meet the component is intact; otherwise the side that
    runs out first is the smaller piece and only it is relabeled.
    """

    def __init__(self, p: int, edges: np.ndarray, active=None):
        self.p = p
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.active = np.ones(len(self.edges), bool) if active is None else np.array(active, bool)
        self.adj = [[] for _ in range(p)]
        for e, (i, j) in enumerate(self.edges):
            self.adj[i].append((j, e))
            self.adj[j].append((i, e))
        self.labels = component_labels(p, self.edges[self.active])
        self.count = int(self.labels.max(initial=-1) + 1)
        self.sizes = np.bincount(self.labels, minlength=p)
        self._free = sorted(set(range(p)) - set(range(self.count)), reverse=True)

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def add_edge(self, e: int):
        if self.active[e]:
            raise ValueError(f"edge {e} is already present")
        self.active[e] = True
        i, j = self.edges[e]
        li, lj = self.labels[i], self.labels[j]
        if li == lj:
            return
        big, small = (li, lj) if self.sizes[li] >= self.sizes[lj] else (lj, li)
        self.labels[self.labels == small] = big
        self.sizes[big] += self.sizes[small]
        self.sizes[small] = 0
        self._free.append(int(small))
        self.count -= 1

    def remove_edge(self, e: int):
        if not self.active[e]:
            raise ValueError(f"edge {e} is not present")
        self.active[e] = False
        i, j = (int(v) for v in self.edges[e])
        side = self._smaller_side(i, j)
        if side is None:
            return
        new = self._free.pop()
        old = self.labels[i]
        idx = np.fromiter(side, dtype=np.int64, count=len(side))
        self.labels[idx] = new
        self.sizes[new] = idx.size
        self.sizes[old] -= idx.size
        self.count += 1

    def _smaller_side(self, i, j):
        """Nodes of the piece that split off, or None if i and j stay connected."""
        seen = ({i}, {j})
        queues = (deque([i]), deque([j]))
        adj, active = self.adj, self.active
        while True:
            for t in (0, 1):
                q = queues[t]
                if not q:
                    return seen[t]
                v = q.popleft()
                for w, e in adj[v]:
                    if not active[e] or w in seen[t]:
                        continue
                    if w in seen[1 - t]:
                        return None
                    seen[t].add(w)
                    q.append(w)


def project_null(labels: np.ndarray, x: np.ndarray, pure=None) -> np.ndarray:
    """Project x onto the complement of the span of component indicators.

    Returns x minus its componentwise mean.  If ``pure`` (a boolean array
    over component labels) is given, only those components carry a null
    direction; the others are left untouched.  Use ``null_part`` for the
    projection onto the null space itself.
    """
    out = x - null_part(labels, x, pure)
    # second pass removes the cancellation error of the first; the result's
    # means are then below roundoff and a further projection is a no-op
    return out - null_part(labels, out, pure)


def null_part(labels: np.ndarray, x: np.ndarray, pure=None) -> np.ndarray:
    """Componentwise mean of x, zero on components outside ``pure``."""
    n = labels.max(initial=-1) + 1
    counts = np.bincount(labels, minlength=n)
    sums = np.bincount(labels, weights=x, minlength=n)
    means = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    # a mean at the level of summation roundoff is zero; this makes
    # project_null exactly idempotent
    mags = np.bincount(labels, weights=np.abs(x), minlength=n)
    means[np.abs(means) <= 2 * np.finfo(float).eps * mags] = 0.0
    if pure is not None:
        means = np.where(pure[:n], means, 0.0)
    return means[labels]


def laplacian(p: int, edges: np.ndarray) -> sp.csc_matrix:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    w = np.ones(edges.shape[0])
    A = sp.coo_matrix((w, (edges[:, 0], edges[:, 1])), shape=(p, p))
    A = A + A.T
    return (sp.diags(np.asarray(A.sum(axis=1)).ravel()) - A).tocsc()


class ReducedLaplacianFactor:
    """Direct factorization of (L + shift) with one node pinned per singular block.

    ``labels`` are component labels of the graph behind L; ``pure`` marks
    the components whose block is singular (no positive shift on any node).
    """

    def __init__(self, L: sp.spmatrix, labels: np.ndarray, pure: np.ndarray, shift=None):
        p = L.shape[0]
        self.p = p
        self.labels = labels
        self.pure = pure
        top = np.full(pure.size, -1)
        np.maximum.at(top, labels, np.arange(p))
        pinned = top[pure & (top >= 0)]
        keep = np.ones(p, bool)
        keep[pinned] = False
        self.keep = np.flatnonzero(keep)
        M = sp.csc_matrix(L)
        if shift is not None:
            M = M + sp.diags(shift)
        M = M[self.keep][:, self.keep].tocsc()
        self.n = self.keep.size
        self.lu = None
        if self.n:
            try:
                self.lu = splu(
                    M,
                    permc_spec="MMD_AT_PLUS_A",
                    diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
            except RuntimeError as exc:
                raise NumericalFailure(f"reduced Laplacian factorization failed: {exc}") from exc
        self.M = M

    def solve(self, b: np.ndarray) -> np.ndarray:
        """x with (L + shift) x = b, assuming b has zero mean on every pure block."""
        b = np.asarray(b, float)
        nb = np.linalg.norm(b)
        if self.pure.any():
            resid = null_part(self.labels, b, self.pure)
            if np.abs(resid).max(initial=0.0) > MEAN_RTOL * max(nb, 1e-300):
                raise ValueError("right-hand side is not in the column space of the Laplacian")
        x = np.zeros(self.p)
        if self.n:
            sol = self.lu.solve(b[self.keep])
            if not np.all(np.isfinite(sol)):
                raise NumericalFailure("reduced Laplacian solve produced non-finite values")
            x[self.keep] = sol
        return x


def laplacian_solve(p: int, edges: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L x = b for the Laplacian of an unweighted graph, b mean-zero per component."""
    labels = component_labels(p, np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    pure = np.ones(labels.max(initial=-1) + 1, bool)
    return ReducedLaplacianFactor(laplacian(p, edges), labels, pure).solve(b)


class GraphBackend(Backend):
    name = "graph"

    def __init__(self, spec):
        if not isinstance(spec, (FusedGraph, SparseFusedGraph)):
            raise TypeError("GraphBackend needs a FusedGraph or SparseFusedGraph penalty")
        super().__init__(spec)
        self.sparse = isinstance(spec, SparseFusedGraph)
        self.n_edges = spec.edges.shape[0]
        self.alpha = spec.alpha if self.sparse else 0.0
        self.edges = spec.edges
        self.comp = ComponentLabeling(self.p, self.edges)
        # alpha-rows currently interior, as a node mask
        self.free = np.ones(self.p, bool) if self.sparse else np.zeros(self.p, bool)
        self._factor = None

    def _on_add(self, i, pos):
        self._factor = None
        if i < self.n_edges:
            self.comp.remove_edge(i)
        else:
            self.free[i - self.n_edges] = False

    def _on_remove(self, i, pos):
        self._factor = None
        if i < self.n_edges:
            self.comp.add_edge(i)
        else:
            self.free[i - self.n_edges] = True

    def pure_components(self) -> np.ndarray:
        """Boolean over labels: components with no interior alpha-row."""
        labels = self.comp.labels
        has_free = np.bincount(labels[self.free], minlength=self.p) > 0
        present = self.comp.sizes > 0
        return present & ~has_free

    def factor(self) -> ReducedLaplacianFactor:
        if self._factor is None:
            L = laplacian(self.p, self.edges[self.comp.active])
            shift = self.alpha**2 * self.free if self.sparse else None
            self._factor = ReducedLaplacianFactor(L, self.comp.labels, self.pure_components(), shift)
        return self._factor

    def project(self, c: np.ndarray) -> np.ndarray:
        return project_null(self.comp.labels, c, self.pure_components())

    def solve(self, c):
        f = self.factor()
        z = f.solve(project_null(self.comp.labels, np.asarray(c, float), f.pure))
        return self.apply_interior(z)

    def apply_interior(self, z: np.ndarray) -> np.ndarray:
        """D_{-B} z in increasing row order."""
        act = self.comp.active
        e = self.edges[act]
        out = z[e[:, 1]] - z[e[:, 0]]
        if self.sparse:
            out = np.concatenate([out, self.alpha * z[self.free]])
        return out

    def nullity(self) -> int:
        return int(self.pure_components().sum())


def fused_step_quantities(y, spec, B=(), s=()):
    """(a_hat, b_hat) for boundary rows B with signs s."""
    be = GraphBackend(spec)
    B = np.asarray(B, dtype=np.int64)
    be.set_boundary(B)
    u = np.zeros(spec.m)
    u[B] = s
    return be.solve(y), be.solve(spec.matrix.T @ u)
