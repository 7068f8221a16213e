"""Dense symmetric indefinite factorization with inertia, plus small helpers."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla


class LDLFactor:
    """Bunch-Kaufman ``P S K S P' = L D L'`` of a symmetric matrix.

    ``S`` is a diagonal Ruiz equilibration, so by Sylvester's law the
    inertia of ``K`` (counts of positive, negative and numerically zero
    eigenvalues) can be read off the block-diagonal ``D`` with a zero test
    relative to one.  The solve routine reuses the factors.
    """

    def __init__(self, K: np.ndarray, zero_tol: float = 1e-14):
        K = np.asarray(K, dtype=float)
        self.n = K.shape[0]
        if self.n == 0:
            self.inertia = (0, 0, 0)
            return
        S = np.ones(self.n)
        Ks = K
        for _ in range(10):
            r = np.sqrt(np.max(np.abs(Ks), axis=1))
            r[r == 0] = 1.0
            S /= r
            Ks = K * S[:, None] * S[None, :]
            if np.max(np.abs(1 - r)) < 1e-2:
                break
        self._S = S
        self._K = K
        K = Ks
        lu, d, perm = sla.ldl(K, lower=True, hermitian=True, check_finite=False)
        self._L = lu[perm]
        self._perm = perm
        diag = np.diag(d).copy()
        off = np.diag(d, -1).copy()
        self._ab = np.zeros((3, self.n))
        self._ab[0, 1:] = off
        self._ab[1] = diag
        self._ab[2, :-1] = off
        eig = sla.eigvalsh_tridiagonal(diag, off) if self.n > 1 else diag
        tiny = np.abs(eig) <= zero_tol
        self.inertia = (int(np.sum((eig > 0) & ~tiny)), int(np.sum((eig < 0) & ~tiny)),
                        int(np.sum(tiny)))

    def solve(self, b: np.ndarray, refine: int = 3) -> np.ndarray:
        """Solve ``K x = b`` with up to ``refine`` steps of iterative refinement."""
        if self.n == 0:
            return np.zeros_like(b)
        b = np.asarray(b, dtype=float)
        x = self._solve(b)
        bnorm = np.max(np.abs(b), initial=0.0)
        for _ in range(refine):
            r = b - self._K @ x
            if np.max(np.abs(r), initial=0.0) <= 1e-15 * max(bnorm, 1e-300):
                break
            x = x + self._solve(r)
        return x

    def _solve(self, b):
        b = b * self._S
        w = sla.solve_triangular(self._L, b[self._perm], lower=True, unit_diagonal=True,
                                 check_finite=False)
        y = sla.solve_banded((1, 1), self._ab, w, check_finite=False)
        v = sla.solve_triangular(self._L, y, lower=True, trans="T", unit_diagonal=True,
                                 check_finite=False)
        out = np.empty_like(v)
        out[self._perm] = v
        return out * self._S


def floor_eigenvalues(H: np.ndarray, floor: float) -> np.ndarray:
    """Symmetrize ``H`` and raise every eigenvalue below ``floor`` to ``floor``."""
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    if H.size == 0:
        return H
    w, V = np.linalg.eigh(H)
    if w[0] >= floor:
        return H
    w = np.maximum(w, floor)
    B = (V * w) @ V.T
    return 0.5 * (B + B.T)


def independent_rows(C: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the rows of ``C``.

    Uses column-pivoted QR on ``C'``; returned indices are sorted.
    """
    C = np.asarray(C, dtype=float)
    if C.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, R, piv = sla.qr(C.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(d > tol * max(d[0], 1.0)))
    return np.sort(piv[:rank])


def null_space_basis(C: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``null(C)`` for a matrix with independent rows."""
    C = np.asarray(C, dtype=float)
    n = C.shape[1]
    if C.shape[0] == 0:
        return np.eye(n)
    Q, _ = np.linalg.qr(C.T, mode="complete")
    return Q[:, C.shape[0]:]
