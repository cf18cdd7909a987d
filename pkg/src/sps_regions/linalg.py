"""Dense linear-algebra primitives for small d and moderate n.

All tolerances are relative to the largest singular value / eigenvalue of
the input.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

RANK_RTOL = 1e-12
SYMMETRY_TOL = 1e-10


class LinAlgInputError(ValueError):
    """Raised when a matrix violates the precondition of a primitive."""


class RankDeficientError(LinAlgInputError):
    def __init__(self, rank: int, ncols: int):
        self.rank = rank
        self.ncols = ncols
        super().__init__(f"matrix is rank deficient: numerical rank {rank} < {ncols} columns")


class NotPositiveDefiniteError(LinAlgInputError):
    def __init__(self, eigenvalue: float, largest: float):
        self.eigenvalue = eigenvalue
        self.largest = largest
        super().__init__(
            f"matrix is not positive definite: eigenvalue {eigenvalue:.6g} "
            f"(largest {largest:.6g})"
        )


class SymmetricEigen(NamedTuple):
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns are eigenvectors


def symmetrize(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)


def sym_eigh(S) -> SymmetricEigen:
    """Eigendecomposition of a symmetric matrix, symmetrized first."""
    values, vectors = np.linalg.eigh(symmetrize(S))
    return SymmetricEigen(values, vectors)


def numerical_rank(A, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def thin_qr(Phi, rtol: float = RANK_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR factorization with a strictly positive diagonal on R.

    Parameters
    ----------
    Phi : (n, d) array_like
        Full column rank, n >= d.

    Returns
    -------
    Q : (n, d) ndarray with orthonormal columns
    R : (d, d) upper triangular ndarray, ``diag(R) > 0``
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2:
        raise LinAlgInputError("Phi must be a 2-d array")
    n, d = Phi.shape
    if n < d:
        raise LinAlgInputError(f"need n >= d, got n={n}, d={d}")
    rank = numerical_rank(Phi, rtol)
    if rank < d:
        raise RankDeficientError(rank, d)
    Q, R = np.linalg.qr(Phi, mode="reduced")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def principal_sqrt_inverse(S, rtol: float = RANK_RTOL) -> np.ndarray:
    """Return W = S^{-1/2}, the symmetric PD matrix with W @ W = inv(S)."""
    vals, vecs = sym_eigh(S)
    top = vals[-1]
    if top <= 0 or vals[0] <= rtol * top:
        raise NotPositiveDefiniteError(float(vals[0]), float(top))
    W = (vecs / np.sqrt(vals)) @ vecs.T
    return symmetrize(W)


def principal_sqrt(S, rtol: float = RANK_RTOL) -> np.ndarray:
    vals, vecs = sym_eigh(S)
    top = vals[-1]
    if top <= 0 or vals[0] <= rtol * top:
        raise NotPositiveDefiniteError(float(vals[0]), float(top))
    return symmetrize((vecs * np.sqrt(vals)) @ vecs.T)


def pseudoinverse(S, rank_tol: float = RANK_RTOL, scale: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix.

    Eigenvalues at or below ``rank_tol * scale`` are treated as zero, where
    ``scale`` defaults to ``lambda_max``. Pass an explicit scale when the
    matrix has a known natural size (e.g. ``I - K^2`` with ``|K| <= 1``) so
    pure round-off is not mistaken for signal.
    """
    S = np.asarray(S, dtype=float)
    magnitude = max(np.abs(S).max(initial=0.0), 1.0)
    if np.abs(S - S.T).max(initial=0.0) > SYMMETRY_TOL * magnitude:
        raise LinAlgInputError("pseudoinverse expects a symmetric matrix")
    vals, vecs = sym_eigh(S)
    top = np.abs(vals).max(initial=0.0)
    if top == 0.0:
        return np.zeros_like(S)
    keep = vals > rank_tol * (top if scale is None else scale)
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return symmetrize((vecs * inv) @ vecs.T)
