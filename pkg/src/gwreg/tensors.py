"""Coefficient tensors and the linear map between tangent spaces.

A tangent element of dimension d is laid out as the d x (d+1) matrix
``(a | V)``. A coefficient tensor ``B`` of shape
``d1 x (d1+1) x d2 x (d2+1)`` maps inputs to outputs through the
contraction

    out[r, s] = sum_{p, q} X[p, q] * B[p, q, r, s].

For the output's V-block to come out symmetric for every symmetric input,
``B`` must equal its mirror: the involution that transposes the V-block of
each output slice (``mirror_tensor``). The identified subfamily fixes the
input-side redundancy (X's V-block is symmetric, so coefficients above the
first superdiagonal fold onto their mirror position) by zeroing every entry
with ``q >= p + 2``; its free coordinates are enumerated by ``half_vec``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatch, InputError, LengthMismatch
from .geometry import TangentVector

MIRROR_ATOL = 1e-9


def free_coord_count(d: int) -> int:
    """Number of free coordinates of a d-dimensional tangent element."""
    return d * (d + 3) // 2


@lru_cache(maxsize=None)
def half_vec_indices(d: int) -> tuple[tuple[int, int], ...]:
    """Positions into the d x (d+1) layout in half-vectorization order.

    Column 1 (the ``a`` part) in full, column 2 (first V column) in full,
    then each later column from its diagonal element down.
    """
    idx = [(r, 0) for r in range(d)]
    idx += [(r, 1) for r in range(d)]
    for c in range(2, d + 1):
        idx += [(r, c) for r in range(c - 1, d)]
    return tuple(idx)


def half_vec(mat: ArrayLike) -> NDArray[np.float64]:
    """Free coordinates of a d x (d+1) block, in half-vectorization order."""
    arr = np.asarray(mat, dtype=np.float64)
    d = arr.shape[0]
    if arr.shape != (d, d + 1):
        raise DimensionMismatch(f"expected d x (d+1) matrix, got {arr.shape}")
    rows, cols = zip(*half_vec_indices(d))
    return arr[rows, cols].copy()


def matrix_from_half_vec(vec: ArrayLike, d: int) -> NDArray[np.float64]:
    """Inverse of :func:`half_vec` onto the identified (folded) layout.

    Entries above the first superdiagonal of the V-block stay zero.
    """
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (free_coord_count(d),):
        raise LengthMismatch(
            f"expected length {free_coord_count(d)} for d={d}, got {v.shape}"
        )
    out = np.zeros((d, d + 1))
    rows, cols = zip(*half_vec_indices(d))
    out[rows, cols] = v
    return out


def tangent_from_half_vec(vec: ArrayLike, d: int) -> TangentVector:
    """Rebuild a tangent element, mirroring the V-block back to symmetric."""
    folded = matrix_from_half_vec(vec, d)
    vmat = folded[:, 1:]
    vmat = vmat + np.tril(vmat, -1).T
    return TangentVector(folded[:, 0], vmat)


def mirror_matrix(c: ArrayLike) -> NDArray[np.float64]:
    """Transpose the V-block of a d x (d+1) layout, keeping the first column.

    An involution; fixed points are exactly the layouts whose V-block is
    symmetric.
    """
    arr = np.asarray(c, dtype=np.float64)
    d = arr.shape[0]
    if arr.shape != (d, d + 1):
        raise DimensionMismatch(f"expected d x (d+1) matrix, got {arr.shape}")
    out = np.empty_like(arr)
    out[:, 0] = arr[:, 0]
    out[:, 1:] = arr[:, 1:].T
    return out


def mirror_tensor(t: ArrayLike) -> NDArray[np.float64]:
    """Apply :func:`mirror_matrix` to every output slice ``t[p, q, :, :]``."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[3] != arr.shape[2] + 1:
        raise DimensionMismatch(f"expected 4-way coefficient array, got {arr.shape}")
    out = np.empty_like(arr)
    out[..., 0] = arr[..., 0]
    out[..., 1:] = np.swapaxes(arr[..., 1:], -2, -1)
    return out


def tensor_sym_part(t: ArrayLike) -> NDArray[np.float64]:
    """``(T + mirror(T)) / 2``, the output-symmetric part of a raw tensor."""
    arr = np.asarray(t, dtype=np.float64)
    return (arr + mirror_tensor(arr)) / 2.0


@dataclass(frozen=True)
class CoefficientTensor:
    """Output-symmetric coefficient tensor of shape d1 x (d1+1) x d2 x (d2+1).

    Construction checks the mirror symmetry up to ``MIRROR_ATOL`` and then
    snaps the entries to their exactly symmetric part.
    """

    entries: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries, dtype=np.float64)
        if (
            arr.ndim != 4
            or arr.shape[1] != arr.shape[0] + 1
            or arr.shape[3] != arr.shape[2] + 1
        ):
            raise DimensionMismatch(
                f"coefficient tensor must be d1 x (d1+1) x d2 x (d2+1), got {arr.shape}"
            )
        mirrored = mirror_tensor(arr)
        gap = float(np.max(np.abs(arr - mirrored), initial=0.0))
        if gap > MIRROR_ATOL:
            raise InputError(f"tensor violates output symmetry by {gap:.3e}")
        snapped = (arr + mirrored) / 2.0
        snapped.setflags(write=False)
        object.__setattr__(self, "entries", snapped)

    @property
    def d1(self) -> int:
        return self.entries.shape[0]

    @property
    def d2(self) -> int:
        return self.entries.shape[2]

    @classmethod
    def zeros(cls, d1: int, d2: int) -> "CoefficientTensor":
        return cls(np.zeros((d1, d1 + 1, d2, d2 + 1)))


class IdentifiedTensor(CoefficientTensor):
    """Coefficient tensor with the input-side redundancy removed.

    Additionally zero wherever ``q >= p + 2`` in every output slice, which
    pins a unique representative among tensors inducing the same linear map
    on symmetric inputs.
    """

    def __post_init__(self) -> None:
        super().__post_init__()
        arr = self.entries
        d1 = arr.shape[0]
        mask = np.zeros((d1, d1 + 1), dtype=bool)
        for p in range(d1):
            mask[p, p + 2 :] = True
        stray = float(np.max(np.abs(arr[mask]), initial=0.0))
        if stray > MIRROR_ATOL:
            raise InputError(
                f"identified tensor has nonzero folded entry of size {stray:.3e}"
            )
        cleaned = arr.copy()
        cleaned[mask] = 0.0
        cleaned.setflags(write=False)
        object.__setattr__(self, "entries", cleaned)


def fold_to_identified(tensor: CoefficientTensor) -> IdentifiedTensor:
    """Fold a general tensor onto its identified representative.

    For symmetric inputs, ``X[p, q] == X[q-1, p+1]``, so the coefficient at
    ``(p, q)`` with ``q >= p + 2`` acts identically to one at the mirrored
    position; folding adds it there and zeroes the original. The induced
    linear map on tangent elements is unchanged.
    """
    arr = np.array(tensor.entries)
    d1 = arr.shape[0]
    for p in range(d1):
        for q in range(p + 2, d1 + 1):
            arr[q - 1, p + 1] += arr[p, q]
            arr[p, q] = 0.0
    return IdentifiedTensor(arr)


def contract(x: TangentVector, tensor: CoefficientTensor) -> TangentVector:
    """Apply the linear map: ``out[r, s] = sum_{p,q} X[p,q] B[p,q,r,s]``."""
    if x.dim != tensor.d1:
        raise DimensionMismatch(
            f"input has dimension {x.dim}, tensor expects {tensor.d1}"
        )
    out = np.einsum("pq,pqrs->rs", x.as_matrix(), tensor.entries)
    return TangentVector.from_matrix(out)


def contract_batch(
    mats: NDArray[np.float64], entries: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Contraction of stacked (n, d1, d1+1) inputs with a raw tensor array."""
    return np.einsum("ipq,pqrs->irs", mats, entries)


def identified_to_vec(tensor: IdentifiedTensor) -> NDArray[np.float64]:
    """Stack the free coefficients: half_vec of each identified output slice.

    Output slices are enumerated in half-vectorization order of the output
    layout; mirror-duplicate slices appear once. Round-trips with
    :func:`vec_to_identified`.
    """
    d2 = tensor.d2
    pieces = [
        half_vec(tensor.entries[:, :, r, s]) for (r, s) in half_vec_indices(d2)
    ]
    return np.concatenate(pieces)


def vec_to_identified(theta: ArrayLike, d1: int, d2: int) -> IdentifiedTensor:
    """Inverse of :func:`identified_to_vec`.

    Raises
    ------
    LengthMismatch
        If ``theta`` does not have length p(d1) * p(d2) with
        ``p(d) = d (d+3) / 2``.
    """
    th = np.asarray(theta, dtype=np.float64)
    p1 = free_coord_count(d1)
    p2 = free_coord_count(d2)
    if th.shape != (p1 * p2,):
        raise LengthMismatch(
            f"expected parameter vector of length {p1 * p2}, got {th.shape}"
        )
    arr = np.zeros((d1, d1 + 1, d2, d2 + 1))
    for j, (r, s) in enumerate(half_vec_indices(d2)):
        block = matrix_from_half_vec(th[j * p1 : (j + 1) * p1], d1)
        arr[:, :, r, s] = block
        if s >= 1:
            arr[:, :, s - 1, r + 1] = block
    return IdentifiedTensor(arr)


@dataclass(frozen=True)
class LowRankFactors:
    """Rank-K factor matrices of a raw coefficient tensor.

    The raw tensor is ``sum_k a1[:,k] o a2[:,k] o a3[:,k] o a4[:,k]``; the
    model tensor is its output-symmetric part, so the symmetry constraint is
    satisfied by construction for any factors.
    """

    a1: NDArray[np.float64]
    a2: NDArray[np.float64]
    a3: NDArray[np.float64]
    a4: NDArray[np.float64]

    def __post_init__(self) -> None:
        mats = []
        for name in ("a1", "a2", "a3", "a4"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim != 2:
                raise DimensionMismatch(f"{name} must be a matrix, got {m.shape}")
            mats.append(m)
        a1, a2, a3, a4 = mats
        k = a1.shape[1]
        if not (a2.shape[1] == a3.shape[1] == a4.shape[1] == k):
            raise DimensionMismatch("factor matrices must share the rank dimension")
        if a2.shape[0] != a1.shape[0] + 1 or a4.shape[0] != a3.shape[0] + 1:
            raise DimensionMismatch(
                "factors must have shapes d1xK, (d1+1)xK, d2xK, (d2+1)xK"
            )
        for name, m in zip(("a1", "a2", "a3", "a4"), mats):
            m = m.copy()
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def rank(self) -> int:
        return self.a1.shape[1]

    @property
    def d1(self) -> int:
        return self.a1.shape[0]

    @property
    def d2(self) -> int:
        return self.a3.shape[0]

    def raw_tensor(self) -> NDArray[np.float64]:
        return np.einsum("pk,qk,rk,sk->pqrs", self.a1, self.a2, self.a3, self.a4)

    def materialize(self) -> CoefficientTensor:
        """The model tensor: output-symmetric part of the raw CP tensor."""
        return CoefficientTensor(tensor_sym_part(self.raw_tensor()))

    def canonicalize(self) -> "LowRankFactors":
        """Fix scaling and column-order indeterminacy without changing
        the materialized tensor.

        Columns are rescaled so the first entries of ``a1``, ``a2``, ``a3``
        are one (skipped for a column whose first entry vanishes, where the
        normalization does not exist), then sorted by descending last row of
        ``a4`` with lexicographic tie-breaking on the full column.
        """
        a1 = np.array(self.a1)
        a2 = np.array(self.a2)
        a3 = np.array(self.a3)
        a4 = np.array(self.a4)
        for k in range(self.rank):
            scale = 1.0
            for m in (a1, a2, a3):
                lead = m[0, k]
                if lead != 0.0:
                    m[:, k] /= lead
                    scale *= lead
            a4[:, k] *= scale
        order = sorted(
            range(self.rank),
            key=lambda k: (-a4[-1, k], tuple(-a4[:, k])),
        )
        return LowRankFactors(a1[:, order], a2[:, order], a3[:, order], a4[:, order])
