"""Generic backend for an arbitrary penalty matrix, built on updatable QR.

Wide strategy: when D has full row rank (so m <= p), every D_{-B}^T has
full column rank and a plain QR of D_{-B}^T is kept up to date by deleting
and inserting columns.  Otherwise (tall or rank-deficient D) a rotated QR of
D_{-B} itself is maintained, which yields minimum-norm solutions of the
transposed system; boundary changes become row updates of D_{-B}.
"""
from __future__ import annotations

import numpy as np

from .backend_base import Backend
from .givens_qr import (
    QRFactor,
    RankDeficientError,
    qr_full,
    qr_rotated,
    solve_ls_minnorm,
    solve_ls_unique,
    update_column,
)


class GenericBackend(Backend):
    name = "generic"

    def __init__(self, spec, strategy: str = "auto", df_offset: int = 0):
        super().__init__(spec)
        self.Dd = np.asarray(spec.matrix.toarray(), dtype=float)
        self.df_offset = df_offset
        self.factor = None
        if strategy not in ("auto", "wide", "tall"):
            raise ValueError(f"unknown strategy {strategy!r}")
        if strategy in ("auto", "wide") and self.m <= self.p and self.m > 0:
            try:
                self.factor = qr_full(self.Dd.T)
            except RankDeficientError:
                if strategy == "wide":
                    raise
        if self.factor is None:
            self.factor = qr_rotated(self.Dd.T, transposed=True)
        self.strategy = "wide" if isinstance(self.factor, QRFactor) else "tall"

    def _on_add(self, i, pos):
        update_column(self.factor, "remove", index=pos)

    def _on_remove(self, i, pos):
        update_column(self.factor, "add", self.Dd[i], pos)

    def solve(self, c):
        c = np.asarray(c, float)
        if self.interior.size == 0:
            return np.zeros(0)
        if self.strategy == "wide":
            return solve_ls_unique(self.factor, c)
        return solve_ls_minnorm(self.factor, c)

    def rank(self) -> int:
        if self.strategy == "wide":
            return self.interior.size
        return self.factor.k

    def nullity(self) -> int:
        return self.p - self.rank() + self.df_offset
