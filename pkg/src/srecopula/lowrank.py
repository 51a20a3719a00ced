"""Implicit algebra for the SRE covariance ``Sigma = S E S^T + I``.

With ``L`` the lower Cholesky factor of ``E`` and ``M = I + L^T S^T S L``,

    (S^T S + E^{-1})^{-1} = L M^{-1} L^T,
    Sigma^{-1} = I - S L M^{-1} L^T S^T,
    log det Sigma = log det M = log det(S^T S + E^{-1}) + log det E.

Working with ``M`` (whose eigenvalues are all >= 1) avoids forming ``E^{-1}``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .basis import CovarianceError, factor_E

__all__ = ["SRECovariance", "CovarianceError"]


class SRECovariance:
    """Immutable snapshot of ``S E S^T + I`` for a row subset ``S``.

    Parameters
    ----------
    S : ndarray, shape (n, b)
    E : ndarray, shape (b, b)
        Symmetric positive-definite.
    StS : ndarray, optional
        Precomputed ``S^T S``; pass it to reuse the O(n b^2) product across
        many values of E.
    chol_E : ndarray, optional
        Lower Cholesky factor of E if already available.
    """

    def __init__(self, S: np.ndarray, E: np.ndarray, StS: np.ndarray | None = None, chol_E: np.ndarray | None = None):
        self.S = np.asarray(S, dtype=float)
        self.E = np.asarray(E, dtype=float)
        if self.S.ndim != 2 or self.E.shape != (self.S.shape[1], self.S.shape[1]):
            raise ValueError("S must be n x b and E must be b x b")
        self.StS = self.S.T @ self.S if StS is None else StS
        if chol_E is None:
            self.E, chol_E = factor_E(self.E)
        self.L = chol_E
        M = self.L.T @ self.StS @ self.L
        M[np.diag_indices_from(M)] += 1.0
        try:
            self.LM = linalg.cholesky(M, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise CovarianceError("S^T S + E^{-1} is singular") from None
        self._diag = None

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def b(self) -> int:
        return self.S.shape[1]

    def subset(self, rows) -> "SRECovariance":
        """Snapshot for a subset of rows sharing this E."""
        S = self.S[rows]
        return SRECovariance(S, self.E, chol_E=self.L)

    def diagonal(self) -> np.ndarray:
        """Marginal standard deviations ``sqrt(s_j^T E s_j + 1)``."""
        if self._diag is None:
            SL = self.S @ self.L
            self._diag = np.sqrt(np.einsum("ij,ij->i", SL, SL) + 1.0)
        return self._diag

    def _half_solve(self, Stv: np.ndarray) -> np.ndarray:
        """``LM^{-1} L^T S^T v`` given ``S^T v``."""
        return linalg.solve_triangular(self.LM, self.L.T @ Stv, lower=True, check_finite=False)

    def solve(self, v: np.ndarray) -> np.ndarray:
        """``Sigma^{-1} v``."""
        v = np.asarray(v, dtype=float)
        a = self._half_solve(self.S.T @ v)
        a = linalg.solve_triangular(self.LM, a, lower=True, trans="T", check_finite=False)
        return v - self.S @ (self.L @ a)

    def quadratic_form(self, v: np.ndarray) -> float:
        """``v^T Sigma^{-1} v``, clamped at zero."""
        v = np.asarray(v, dtype=float)
        a = self._half_solve(self.S.T @ v)
        q = float(v @ v - a @ a)
        return q if q > 0.0 else 0.0

    def log_det(self) -> float:
        """``log det Sigma``."""
        return 2.0 * float(np.sum(np.log(np.diag(self.LM))))

    def log_det_E(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def posterior_mean(self, w: np.ndarray) -> np.ndarray:
        """``(S^T S + E^{-1})^{-1} S^T w``."""
        a = self._half_solve(self.S.T @ np.asarray(w, dtype=float))
        a = linalg.solve_triangular(self.LM, a, lower=True, trans="T", check_finite=False)
        return self.L @ a

    def posterior_cov(self) -> np.ndarray:
        """``(S^T S + E^{-1})^{-1}`` as a dense b x b matrix."""
        A = linalg.solve_triangular(self.LM, self.L.T, lower=True, check_finite=False)
        return A.T @ A

    def sample_posterior(self, w: np.ndarray, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        """Draw from ``N(mean(w), scale * (S^T S + E^{-1})^{-1})``."""
        z = rng.standard_normal(self.b)
        a = self._half_solve(self.S.T @ np.asarray(w, dtype=float))
        a = a + np.sqrt(scale) * z
        a = linalg.solve_triangular(self.LM, a, lower=True, trans="T", check_finite=False)
        return self.L @ a

    def dense(self) -> np.ndarray:
        """Materialize Sigma (testing aid only)."""
        return self.S @ self.E @ self.S.T + np.eye(self.n)
