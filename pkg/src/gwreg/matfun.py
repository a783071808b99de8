"""Symmetric-matrix primitives: square roots, eigenvalue queries, PSD projection.

All eigenwork goes through ``numpy.linalg.eigh`` (the dedicated symmetric
solver) and every recomposed matrix is re-symmetrized to kill round-off
drift, since downstream maps assume exact symmetry.

Tolerances
----------
* PSD acceptance is relative: an eigenvalue is treated as zero when it lies
  within ``PSD_RTOL * (1 + max|eigenvalue|)`` of zero.
* SPD acceptance is absolute: the smallest eigenvalue must exceed
  ``SPD_TOL``. Matrices below it are rejected rather than jittered, because
  the transport formulas need a genuine inverse square root.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import NotPositiveDefinite, NotPositiveSemidefinite

PSD_RTOL = 1e-10
SPD_TOL = 1e-10


def symmetrize(mat: ArrayLike) -> NDArray[np.float64]:
    """Return ``(M + M.T) / 2`` as a float64 array."""
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    return (arr + arr.T) / 2.0


def psd_tolerance(eigvals: NDArray[np.float64]) -> float:
    """Scale-free PSD tolerance for a set of eigenvalues."""
    return PSD_RTOL * (1.0 + float(np.max(np.abs(eigvals), initial=0.0)))


def min_eigenvalue(mat: ArrayLike) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(symmetrize(mat))[0])


def sqrt_psd(mat: ArrayLike) -> NDArray[np.float64]:
    """Positive square root of a positive-semidefinite symmetric matrix.

    Eigenvalues within the relative PSD tolerance below zero are clipped to
    zero before taking the root.

    Raises
    ------
    NotPositiveSemidefinite
        If the smallest eigenvalue falls below ``-psd_tolerance``.
    """
    m = symmetrize(mat)
    w, v = np.linalg.eigh(m)
    tol = psd_tolerance(w)
    if w[0] < -tol:
        raise NotPositiveSemidefinite(
            f"matrix has eigenvalue {w[0]:.3e} below -{tol:.3e}"
        )
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return symmetrize(root)


def invsqrt_pd(mat: ArrayLike) -> NDArray[np.float64]:
    """Inverse square root of a strictly positive-definite symmetric matrix.

    Raises
    ------
    NotPositiveDefinite
        If the smallest eigenvalue is at or below ``SPD_TOL``.
    """
    m = symmetrize(mat)
    w, v = np.linalg.eigh(m)
    if w[0] <= SPD_TOL:
        raise NotPositiveDefinite(
            f"matrix has eigenvalue {w[0]:.3e} at or below {SPD_TOL:.0e}"
        )
    root = (v / np.sqrt(w)) @ v.T
    return symmetrize(root)


def project_psd(mat: ArrayLike) -> NDArray[np.float64]:
    """Frobenius-nearest PSD matrix: clip negative eigenvalues to zero."""
    m = symmetrize(mat)
    w, v = np.linalg.eigh(m)
    if w[0] >= 0.0:
        return m
    proj = (v * np.clip(w, 0.0, None)) @ v.T
    return symmetrize(proj)


def assert_spd(mat: ArrayLike, what: str = "matrix") -> NDArray[np.float64]:
    """Validate strict positive definiteness, returning the symmetrized input."""
    m = symmetrize(mat)
    smallest = float(np.linalg.eigvalsh(m)[0])
    if smallest <= SPD_TOL:
        raise NotPositiveDefinite(
            f"{what} must be positive definite; smallest eigenvalue {smallest:.3e}"
        )
    return m
