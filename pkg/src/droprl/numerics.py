"""Small dense positive-definite linear algebra shared by the solvers."""
from __future__ import annotations

import numpy as np
from scipy import linalg


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a matrix expected to be positive definite fails to factor."""

    def __init__(self, minor: int):
        super().__init__(f"leading minor of order {minor} is not positive definite")
        self.minor = minor


def gram_accumulate(features, weights=None, lam: float = 1.0) -> np.ndarray:
    """Return ``lam * I + sum_t w_t phi_t phi_t^T`` for rows ``phi_t`` of `features`."""
    if lam <= 0:
        raise ValueError(f"regularizer must be positive, got {lam}")
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise ValueError("features must be a 2-d array (n, d)")
    n, d = features.shape
    if weights is None:
        weights = np.ones(n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise ValueError("one weight per feature row required")
    if np.any(weights <= 0):
        raise ValueError("weights must be strictly positive")
    gram = features.T @ (weights[:, None] * features)
    gram = 0.5 * (gram + gram.T)
    gram[np.diag_indices(d)] += lam
    return gram


class Cholesky:
    """Cached lower Cholesky factor of a positive-definite matrix.

    One factorization per step is reused for the ridge estimate, every
    dual-weight row, and the inverse diagonal used by the penalty.
    """

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("square matrix required")
        self.dim = matrix.shape[0]
        if self.dim == 0:
            self._factor = matrix
            return
        c, info = linalg.lapack.dpotrf(matrix, lower=1, clean=1)
        if info > 0:
            raise FactorizationError(int(info))
        if info < 0:
            raise ValueError(f"illegal argument to dpotrf ({info})")
        self._factor = c

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        return linalg.cho_solve((self._factor, True), b, check_finite=False)

    def inverse_diagonal(self) -> np.ndarray:
        # diag(M^-1)_i = ||L^-1 e_i||^2
        linv = linalg.solve_triangular(
            self._factor, np.eye(self.dim), lower=True, check_finite=False
        )
        return np.einsum("ji,ji->i", linv, linv)


def psd_solve(matrix, b) -> np.ndarray:
    """Solve ``matrix @ x = b`` for a positive-definite `matrix`."""
    return Cholesky(matrix).solve(b)


def inverse_diagonal(matrix) -> np.ndarray:
    """Diagonal of the inverse of a positive-definite matrix."""
    return Cholesky(matrix).inverse_diagonal()


def sym_eigen_extremes(matrix) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    matrix = np.asarray(matrix, dtype=float)
    w = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    return float(w[0]), float(w[-1])


def weighted_feature_norm_sum(phi, inv_diag) -> np.ndarray:
    """``sum_i ||phi_i e_i||_{M^-1}`` for each row of `phi`, given ``diag(M^-1)``.

    Uses ``||phi_i e_i||_{M^-1} = |phi_i| sqrt((M^-1)_ii)``.
    """
    phi = np.asarray(phi, dtype=float)
    return np.abs(phi) @ np.sqrt(inv_diag)
