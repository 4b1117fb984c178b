"""Symmetric banded matrices stored as the upper band, plus Cholesky solves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

# above this many rows the factorisation stays banded
DENSE_LIMIT = 513


class CoercivityError(np.linalg.LinAlgError):
    """Cholesky failed: the interior block is not positive definite."""


@dataclass(frozen=True)
class SymBandMatrix:
    """``upper[i, m] = A[i, i + m]`` for 0 <= m <= bw (entries past n are unused)."""

    upper: np.ndarray

    @property
    def n(self) -> int:
        return self.upper.shape[0]

    @property
    def bw(self) -> int:
        return self.upper.shape[1] - 1

    def todense(self) -> np.ndarray:
        n, a = self.n, np.zeros((self.n, self.n))
        for m in range(self.bw + 1):
            i = np.arange(n - m)
            a[i, i + m] = self.upper[i, m]
            a[i + m, i] = self.upper[i, m]
        return a

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = self.upper[:, 0] * v
        for m in range(1, min(self.bw, self.n - 1) + 1):
            d = self.upper[: self.n - m, m]
            out[: self.n - m] += d * v[m:]
            out[m:] += d * v[: self.n - m]
        return out

    def quad(self, u, v=None) -> float:
        v = u if v is None else v
        return float(np.dot(np.asarray(u, dtype=float), self.matvec(v)))

    def principal(self, lo: int, hi: int) -> "SymBandMatrix":
        """Principal submatrix on the contiguous index range [lo, hi)."""
        up = self.upper[lo:hi].copy()
        k = hi - lo
        for m in range(1, self.bw + 1):
            up[max(k - m, 0) :, m] = 0.0
        return SymBandMatrix(up)

    def max_abs(self) -> float:
        return float(np.abs(self.upper).max())

    def scipy_upper_form(self) -> np.ndarray:
        """Layout used by ``scipy.linalg.cholesky_banded(lower=False)``."""
        n, bw = self.n, self.bw
        ab = np.zeros((bw + 1, n))
        for m in range(bw + 1):
            ab[bw - m, m:] = self.upper[: n - m, m]
        return ab


class Factor:
    """Cholesky factor of a SymBandMatrix; dense below DENSE_LIMIT rows."""

    def __init__(self, a: SymBandMatrix):
        self.n = a.n
        self.dense = a.n <= DENSE_LIMIT
        try:
            if self.dense:
                self._c = sla.cho_factor(a.todense(), lower=False, check_finite=True)
            else:
                self._c = sla.cholesky_banded(a.scipy_upper_form(), lower=False)
        except np.linalg.LinAlgError as exc:
            lam = min_eigenvalue(a)
            raise CoercivityError(
                f"stiffness block not positive definite (min eigenvalue ~ {lam:.3e})"
            ) from exc

    def solve(self, rhs) -> np.ndarray:
        if self.dense:
            return sla.cho_solve(self._c, rhs)
        return sla.cho_solve_banded((self._c, False), rhs)


def min_eigenvalue(a: SymBandMatrix) -> float:
    if a.n <= 2000:
        return float(np.linalg.eigvalsh(a.todense())[0])
    return float(sla.eig_banded(a.scipy_upper_form(), lower=False, eigvals_only=True,
                                select="i", select_range=(0, 0))[0])
