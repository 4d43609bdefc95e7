"""Shared plumbing for the least-squares backends.

Every backend answers one question for the current boundary set B: the
minimum-norm minimizer a of ||c - D_{-B}^T a||_2 over the interior rows,
returned in increasing row order.  The path driver calls ``solve`` with
c = y for the intercept and c = D_B^T s for the slope.
"""
from __future__ import annotations

import numpy as np


class NumericalFailure(RuntimeError):
    """A factorization broke down (non-positive pivot, singular block, ...)."""


class ConditioningWarning(UserWarning):
    pass


class Backend:
    name = "base"

    def __init__(self, spec):
        self.spec = spec
        self.m = spec.m
        self.p = spec.p
        self.D = spec.matrix
        self._mask = np.zeros(self.m, bool)
        self._interior = None
        self._boundary = None

    @property
    def interior(self) -> np.ndarray:
        if self._interior is None:
            self._interior = np.flatnonzero(~self._mask)
        return self._interior

    @property
    def boundary(self) -> np.ndarray:
        if self._boundary is None:
            self._boundary = np.flatnonzero(self._mask)
        return self._boundary

    def _touch(self):
        self._interior = None
        self._boundary = None

    def add_boundary(self, i: int):
        if self._mask[i]:
            raise ValueError(f"row {i} is already on the boundary")
        pos = int(np.searchsorted(self.interior, i))
        self._mask[i] = True
        self._touch()
        self._on_add(i, pos)

    def remove_boundary(self, i: int):
        if not self._mask[i]:
            raise ValueError(f"row {i} is not on the boundary")
        self._mask[i] = False
        self._touch()
        pos = int(np.searchsorted(self.interior, i))
        self._on_remove(i, pos)

    def set_boundary(self, B):
        for i in self.boundary.copy():
            self.remove_boundary(int(i))
        for i in np.sort(np.asarray(B, dtype=np.int64)):
            self.add_boundary(int(i))

    # hooks: ``pos`` is the position of row i within the interior ordering
    def _on_add(self, i: int, pos: int):
        pass

    def _on_remove(self, i: int, pos: int):
        pass

    def solve(self, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def nullity(self) -> int:
        raise NotImplementedError
