"""Proxy Gaussians from raw observation matrices and the sample-based fit.

When the per-unit distributions are observed only through draws, each unit
is summarized by its empirical mean and covariance (1/N divisor, no Bessel
correction: the plug-in moments, not the unbiased ones) and the resulting
proxy Gaussians run through the same pipeline as directly observed ones.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatch, EmptyBlock, EmptyInput
from .geometry import GaussianMeasure, ReferenceMeasure
from .matfun import symmetrize
from .regression import FitOptions, FittedModel, fit_distributions


@dataclass(frozen=True)
class SampleBlock:
    """Per-unit observation matrices: unit i holds an (N_i, d) array.

    Units may have different draw counts. A unit with a single row gets a
    zero covariance estimate and triggers a warning.
    """

    units: tuple[NDArray[np.float64], ...]

    def __post_init__(self) -> None:
        if len(self.units) == 0:
            raise EmptyBlock("sample block has no units")
        cleaned = []
        d = None
        for i, u in enumerate(self.units):
            arr = np.asarray(u, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] < 1:
                raise EmptyBlock(f"unit {i} must be a nonempty N x d matrix")
            if d is None:
                d = arr.shape[1]
            elif arr.shape[1] != d:
                raise DimensionMismatch(
                    f"unit {i} has {arr.shape[1]} coordinates, expected {d}"
                )
            arr = arr.copy()
            arr.setflags(write=False)
            cleaned.append(arr)
        if any(u.shape[0] < 2 for u in cleaned):
            warnings.warn(
                "some units have a single observation; their covariance "
                "estimates are zero",
                UserWarning,
            )
        object.__setattr__(self, "units", tuple(cleaned))

    @classmethod
    def from_array(cls, arr: ArrayLike) -> "SampleBlock":
        """Build from an (n, N, d) array of equal-size units."""
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim != 3:
            raise DimensionMismatch(f"expected (n, N, d) array, got {a.shape}")
        return cls(tuple(a[i] for i in range(a.shape[0])))

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def dim(self) -> int:
        return self.units[0].shape[1]


def empirical_moments(obs: ArrayLike) -> GaussianMeasure:
    """Plug-in Gaussian for one unit: row-average mean, 1/N covariance."""
    arr = np.asarray(obs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise EmptyBlock("observations must form a nonempty N x d matrix")
    mean = arr.mean(axis=0)
    centered = arr - mean
    cov = symmetrize(centered.T @ centered / arr.shape[0])
    return GaussianMeasure(mean, cov)


def block_moments(block: SampleBlock) -> list[GaussianMeasure]:
    """Empirical moments of every unit in a block."""
    return [empirical_moments(u) for u in block.units]


MeasuresOrBlock = Union[SampleBlock, Sequence[GaussianMeasure]]


def _as_measures(data: MeasuresOrBlock, what: str) -> list[GaussianMeasure]:
    if isinstance(data, SampleBlock):
        return block_moments(data)
    measures = list(data)
    if len(measures) == 0:
        raise EmptyInput(f"{what} is empty")
    if not all(isinstance(m, GaussianMeasure) for m in measures):
        raise DimensionMismatch(
            f"{what} must be a SampleBlock or a sequence of GaussianMeasure"
        )
    return measures


def fit_from_samples(
    pred: MeasuresOrBlock,
    resp: MeasuresOrBlock,
    kind: str = "basic",
    rank: Optional[int] = None,
    options: Optional[FitOptions] = None,
    ref_in: Optional[ReferenceMeasure] = None,
    ref_out: Optional[ReferenceMeasure] = None,
) -> FittedModel:
    """Fit from raw observation blocks via per-unit proxy Gaussians.

    Passing sequences of :class:`GaussianMeasure` instead of blocks bypasses
    the moment step (exact-moment path), making this coincide with the
    directly-observed pipeline.

    Raises
    ------
    DegenerateReference
        If an estimated barycenter covariance fails the SPD check.
    """
    pred_measures = _as_measures(pred, "predictors")
    resp_measures = _as_measures(resp, "responses")
    return fit_distributions(
        pred_measures,
        resp_measures,
        kind=kind,
        rank=rank,
        options=options,
        ref_in=ref_in,
        ref_out=ref_out,
    )
