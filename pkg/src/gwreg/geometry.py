"""Gaussian measures, the closed-form 2-Wasserstein geometry, and barycenters.

A Gaussian ``N(m, C)`` is carried by :class:`GaussianMeasure`. Around a
fixed nonsingular reference ``N(m*, C*)`` the space of Gaussians linearizes
into pairs ``(a, V)`` of a vector and a symmetric matrix (the affine part
of the optimal transport map minus the identity), carried by
:class:`TangentVector`. ``log_map`` / ``exp_map`` move between the two
pictures, and ``tangent_inner`` equips the linear space with the inner
product

    <(a, V), (b, U)> = (a + V m*)^T (b + U m*) + tr(V C* U),

under which ``log_map`` is an isometry onto distances from the reference.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .errors import (
    ConvergenceWarning,
    DegenerateInput,
    DimensionMismatch,
    EmptyInput,
    NoConvergence,
    NotPositiveDefinite,
    NotPositiveSemidefinite,
    OutOfRange,
)
from .matfun import SPD_TOL, psd_tolerance, sqrt_psd, symmetrize

FM_TOL = 1e-9
FM_MAX_ITERS = 500
FIRST_ORDER_TOL = 1e-6


def _readonly(arr: NDArray[np.float64]) -> NDArray[np.float64]:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GaussianMeasure:
    """A Gaussian distribution ``N(mean, cov)`` with PSD covariance.

    The covariance is symmetrized on construction; eigenvalues that dip
    below zero within the relative PSD tolerance are clipped to zero, and
    anything lower raises :class:`NotPositiveSemidefinite`.
    """

    mean: NDArray[np.float64]
    cov: NDArray[np.float64]

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        if mean.ndim != 1:
            raise DimensionMismatch(f"mean must be a vector, got shape {mean.shape}")
        cov = symmetrize(self.cov)
        if cov.shape[0] != mean.shape[0]:
            raise DimensionMismatch(
                f"mean has length {mean.shape[0]} but cov is {cov.shape[0]}x{cov.shape[0]}"
            )
        w, v = np.linalg.eigh(cov)
        tol = psd_tolerance(w)
        if w[0] < -tol:
            raise NotPositiveSemidefinite(
                f"covariance has eigenvalue {w[0]:.3e} below -{tol:.3e}"
            )
        if w[0] < 0.0:
            cov = symmetrize((v * np.clip(w, 0.0, None)) @ v.T)
        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "cov", _readonly(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ReferenceMeasure:
    """A nonsingular Gaussian anchoring the tangent space.

    Caches the covariance square root and inverse square root used by every
    transport computation.
    """

    measure: GaussianMeasure
    cov_sqrt: NDArray[np.float64] = field(init=False)
    cov_invsqrt: NDArray[np.float64] = field(init=False)

    def __post_init__(self) -> None:
        w, v = np.linalg.eigh(self.measure.cov)
        if w[0] <= SPD_TOL:
            raise NotPositiveDefinite(
                f"reference covariance must be positive definite; "
                f"smallest eigenvalue {w[0]:.3e}"
            )
        root = symmetrize((v * np.sqrt(w)) @ v.T)
        invroot = symmetrize((v / np.sqrt(w)) @ v.T)
        object.__setattr__(self, "cov_sqrt", _readonly(root))
        object.__setattr__(self, "cov_invsqrt", _readonly(invroot))

    @classmethod
    def from_moments(cls, mean: ArrayLike, cov: ArrayLike) -> "ReferenceMeasure":
        return cls(GaussianMeasure(np.asarray(mean), np.asarray(cov)))

    @classmethod
    def standard(cls, dim: int) -> "ReferenceMeasure":
        return cls(GaussianMeasure(np.zeros(dim), np.eye(dim)))

    @property
    def mean(self) -> NDArray[np.float64]:
        return self.measure.mean

    @property
    def cov(self) -> NDArray[np.float64]:
        return self.measure.cov

    @property
    def dim(self) -> int:
        return self.measure.dim


@dataclass(frozen=True)
class TangentVector:
    """Element ``(a, V)`` of the linear space attached to a reference.

    ``a`` is a d-vector and ``V`` a symmetric d x d matrix; together they
    encode the affine map ``x -> a + (V + I) x``.
    """

    a: NDArray[np.float64]
    V: NDArray[np.float64]

    def __post_init__(self) -> None:
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        if a.ndim != 1:
            raise DimensionMismatch(f"a must be a vector, got shape {a.shape}")
        V = symmetrize(self.V)
        if V.shape[0] != a.shape[0]:
            raise DimensionMismatch(
                f"a has length {a.shape[0]} but V is {V.shape[0]}x{V.shape[0]}"
            )
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "V", _readonly(V))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def as_matrix(self) -> NDArray[np.float64]:
        """The d x (d+1) layout ``(a | V)`` used by tensor contraction."""
        return np.hstack([self.a[:, None], self.V])

    @classmethod
    def from_matrix(cls, mat: ArrayLike) -> "TangentVector":
        arr = np.asarray(mat, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != arr.shape[0] + 1:
            raise DimensionMismatch(
                f"expected a d x (d+1) matrix, got shape {arr.shape}"
            )
        return cls(arr[:, 0], arr[:, 1:])

    @classmethod
    def zero(cls, dim: int) -> "TangentVector":
        return cls(np.zeros(dim), np.zeros((dim, dim)))

    def __add__(self, other: "TangentVector") -> "TangentVector":
        return TangentVector(self.a + other.a, self.V + other.V)

    def __sub__(self, other: "TangentVector") -> "TangentVector":
        return TangentVector(self.a - other.a, self.V - other.V)

    def __mul__(self, scalar: float) -> "TangentVector":
        return TangentVector(self.a * scalar, self.V * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentVector":
        return self * -1.0


def _check_same_dim(d1: int, d2: int, what: str) -> None:
    if d1 != d2:
        raise DimensionMismatch(f"{what}: dimensions {d1} and {d2} differ")


def wasserstein_distance(mu1: GaussianMeasure, mu2: GaussianMeasure) -> float:
    """Closed-form 2-Wasserstein distance between two Gaussians.

    ``sqrt(||m1 - m2||^2 + tr[C1 + C2 - 2 (C1^{1/2} C2 C1^{1/2})^{1/2}])``,
    with a round-off-negative radicand clipped to zero so identical inputs
    return exactly 0.
    """
    _check_same_dim(mu1.dim, mu2.dim, "wasserstein_distance")
    out = _kernels.wasserstein_batch(
        mu1.mean[None, :], mu1.cov[None, :, :], mu2.mean[None, :], mu2.cov[None, :, :]
    )
    return float(out[0])


def wasserstein_distances(
    means1: NDArray[np.float64],
    covs1: NDArray[np.float64],
    means2: NDArray[np.float64],
    covs2: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Pairwise distances between two equal-length stacks of Gaussians."""
    means1 = np.ascontiguousarray(means1, dtype=np.float64)
    covs1 = np.ascontiguousarray(covs1, dtype=np.float64)
    means2 = np.ascontiguousarray(means2, dtype=np.float64)
    covs2 = np.ascontiguousarray(covs2, dtype=np.float64)
    if means1.shape != means2.shape or covs1.shape != covs2.shape:
        raise DimensionMismatch("stacks of Gaussians must have matching shapes")
    return _kernels.wasserstein_batch(means1, covs1, means2, covs2)


def transport_coefficient(sigma1: ArrayLike, sigma2: ArrayLike) -> NDArray[np.float64]:
    """The matrix ``S = C1^{-1/2} [C1^{1/2} C2 C1^{1/2}]^{1/2} C1^{-1/2}``.

    ``sigma1`` must be strictly positive definite, ``sigma2`` positive
    semidefinite; the result is symmetric PSD and pushes ``N(., sigma1)``
    onto ``N(., sigma2)`` as the linear part of the optimal map.
    """
    s1 = symmetrize(sigma1)
    w1, v1 = np.linalg.eigh(s1)
    if w1[0] <= SPD_TOL:
        raise NotPositiveDefinite(
            f"source covariance must be positive definite; "
            f"smallest eigenvalue {w1[0]:.3e}"
        )
    s2 = symmetrize(sigma2)
    w2 = np.linalg.eigvalsh(s2)
    if w2[0] < -psd_tolerance(w2):
        raise NotPositiveSemidefinite(
            f"target covariance has eigenvalue {w2[0]:.3e} below tolerance"
        )
    root1 = (v1 * np.sqrt(w1)) @ v1.T
    invroot1 = (v1 / np.sqrt(w1)) @ v1.T
    mid = sqrt_psd(root1 @ s2 @ root1)
    return symmetrize(invroot1 @ mid @ invroot1)


def optimal_transport_apply(
    source: GaussianMeasure, target: GaussianMeasure, x: ArrayLike
) -> NDArray[np.float64]:
    """Apply the optimal transport map ``x -> m2 + S(C1, C2)(x - m1)``."""
    _check_same_dim(source.dim, target.dim, "optimal_transport_apply")
    pt = np.asarray(x, dtype=np.float64)
    if pt.shape[-1] != source.dim:
        raise DimensionMismatch(
            f"point has dimension {pt.shape[-1]}, expected {source.dim}"
        )
    coeff = transport_coefficient(source.cov, target.cov)
    return target.mean + (pt - source.mean) @ coeff.T


def tangent_inner(u: TangentVector, v: TangentVector, ref: ReferenceMeasure) -> float:
    """Inner product ``(a + V m*)^T (b + U m*) + tr(V C* U)``."""
    _check_same_dim(u.dim, v.dim, "tangent_inner")
    _check_same_dim(u.dim, ref.dim, "tangent_inner")
    m, c = ref.mean, ref.cov
    lin = float((u.a + u.V @ m) @ (v.a + v.V @ m))
    quad = float(np.sum((u.V @ c) * v.V))
    return lin + quad


def tangent_norm(u: TangentVector, ref: ReferenceMeasure) -> float:
    """Norm induced by :func:`tangent_inner`; always nonnegative."""
    return float(np.sqrt(max(tangent_inner(u, u, ref), 0.0)))


def _transport_from_ref(ref: ReferenceMeasure, cov: NDArray[np.float64]) -> NDArray[np.float64]:
    out = _kernels.transport_batch(ref.cov_sqrt, ref.cov_invsqrt, cov[None, :, :])
    return out[0]


def log_map(mu: GaussianMeasure, ref: ReferenceMeasure) -> TangentVector:
    """Lift a Gaussian to the tangent space at the reference.

    Returns ``(m - S m*, S - I)`` with ``S`` the transport coefficient from
    the reference covariance to ``mu``'s.
    """
    _check_same_dim(mu.dim, ref.dim, "log_map")
    s = _transport_from_ref(ref, mu.cov)
    return TangentVector(mu.mean - s @ ref.mean, s - np.eye(ref.dim))


def exp_map(u: TangentVector, ref: ReferenceMeasure) -> GaussianMeasure:
    """Map a tangent element back to a Gaussian.

    Returns ``N(a + (V+I) m*, (V+I) C* (V+I))``; requires ``V + I`` PSD.

    Raises
    ------
    OutOfRange
        If ``V + I`` has an eigenvalue below the PSD tolerance.
    """
    _check_same_dim(u.dim, ref.dim, "exp_map")
    t = u.V + np.eye(u.dim)
    w = np.linalg.eigvalsh(t)
    if w[0] < -psd_tolerance(w):
        raise OutOfRange(
            f"V + I has eigenvalue {w[0]:.3e}; tangent element is outside "
            "the admissible range"
        )
    mean = u.a + t @ ref.mean
    cov = symmetrize(t @ ref.cov @ t)
    return GaussianMeasure(mean, cov)


def in_range(u: TangentVector) -> bool:
    """Whether ``V + I`` is PSD, i.e. ``exp_map`` accepts the element."""
    w = np.linalg.eigvalsh(u.V + np.eye(u.dim))
    return bool(w[0] >= -psd_tolerance(w))


def stack_measures(
    measures: Sequence[GaussianMeasure],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Stack means into (n, d) and covariances into (n, d, d) arrays."""
    if len(measures) == 0:
        raise EmptyInput("no measures to stack")
    d = measures[0].dim
    for m in measures:
        _check_same_dim(m.dim, d, "stack_measures")
    means = np.stack([m.mean for m in measures])
    covs = np.stack([m.cov for m in measures])
    return means, covs


def log_map_batch(
    means: NDArray[np.float64], covs: NDArray[np.float64], ref: ReferenceMeasure
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Vectorized :func:`log_map` over stacked moments; returns (A, V) stacks."""
    covs = np.ascontiguousarray(covs, dtype=np.float64)
    s = _kernels.transport_batch(ref.cov_sqrt, ref.cov_invsqrt, covs)
    a = np.asarray(means, dtype=np.float64) - s @ ref.mean
    v = s - np.eye(ref.dim)
    return a, v


def exp_map_batch(
    a: NDArray[np.float64], v: NDArray[np.float64], ref: ReferenceMeasure
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Vectorized :func:`exp_map`; no range check, callers handle projection."""
    t = v + np.eye(ref.dim)
    means = a + t @ ref.mean
    covs = t @ ref.cov @ t
    covs = (covs + np.swapaxes(covs, -1, -2)) / 2.0
    return means, covs


def frechet_mean(
    measures: Sequence[GaussianMeasure],
    weights: Optional[ArrayLike] = None,
) -> GaussianMeasure:
    """Barycenter of Gaussians under squared 2-Wasserstein distance.

    The mean component is the weighted Euclidean average of the means (the
    squared distance separates additively in means). The covariance solves
    the fixed-point equation

        C <- C^{-1/2} ( sum_i w_i (C^{1/2} C_i C^{1/2})^{1/2} )^2 C^{-1/2},

    iterated from the Euclidean covariance average until the Wasserstein
    change between successive iterates is at most ``FM_TOL``. A first-order
    optimality check (the weighted mean of log maps at the result) runs
    post-hoc and emits :class:`ConvergenceWarning` when it exceeds
    ``FIRST_ORDER_TOL``.

    Raises
    ------
    DegenerateInput
        If no positive-weight input has an SPD covariance.
    NoConvergence
        If ``FM_MAX_ITERS`` iterations do not reach ``FM_TOL``.
    """
    if len(measures) == 0:
        raise EmptyInput("frechet_mean needs at least one measure")
    d = measures[0].dim
    for m in measures:
        _check_same_dim(m.dim, d, "frechet_mean")
    if weights is None:
        w = np.full(len(measures), 1.0 / len(measures))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(measures),):
            raise DimensionMismatch(
                f"weights must have length {len(measures)}, got shape {w.shape}"
            )
        if np.any(w < 0.0) or w.sum() <= 0.0:
            raise DegenerateInput("weights must be nonnegative with positive sum")
        w = w / w.sum()

    keep = w > 0.0
    kept = [m for m, k in zip(measures, keep) if k]
    w = w[keep]
    means, covs = stack_measures(kept)

    smallest = np.linalg.eigvalsh(covs)[:, 0]
    if not np.any(smallest > SPD_TOL):
        raise DegenerateInput(
            "frechet_mean needs at least one SPD covariance among the inputs"
        )

    mean = w @ means
    cov = np.einsum("i,ijk->jk", w, covs)
    result = None
    for _ in range(FM_MAX_ITERS):
        wc, vc = np.linalg.eigh(cov)
        if wc[0] <= SPD_TOL:
            raise DegenerateInput("barycenter iterate lost positive definiteness")
        root = (vc * np.sqrt(wc)) @ vc.T
        invroot = (vc / np.sqrt(wc)) @ vc.T
        mids = _kernels.sqrt_psd_batch(np.ascontiguousarray(root @ covs @ root))
        tmat = np.einsum("i,ijk->jk", w, mids)
        nxt = symmetrize(invroot @ tmat @ tmat @ invroot)
        change = _kernels.wasserstein_batch(
            np.zeros((1, d)), cov[None], np.zeros((1, d)), nxt[None]
        )[0]
        cov = nxt
        if change <= FM_TOL:
            result = GaussianMeasure(mean, cov)
            break
    if result is None:
        raise NoConvergence(
            f"barycenter fixed point did not reach {FM_TOL:g} "
            f"in {FM_MAX_ITERS} iterations"
        )

    ref = ReferenceMeasure(result)
    a, v = log_map_batch(means, covs, ref)
    avg = TangentVector(w @ a, np.einsum("i,ijk->jk", w, v))
    gap = tangent_norm(avg, ref)
    if gap > FIRST_ORDER_TOL:
        warnings.warn(
            f"barycenter first-order condition {gap:.3e} exceeds "
            f"{FIRST_ORDER_TOL:g}",
            ConvergenceWarning,
        )
    return result
