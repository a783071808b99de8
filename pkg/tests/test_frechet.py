import numpy as np
import pytest

from gwreg.errors import DegenerateInput, DimensionMismatch, EmptyInput
from gwreg.geometry import (
    GaussianMeasure,
    ReferenceMeasure,
    TangentVector,
    frechet_mean,
    log_map,
    tangent_norm,
    wasserstein_distance,
)


def test_point_mass():
    mu = GaussianMeasure([1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]])
    got = frechet_mean([mu] * 5)
    assert wasserstein_distance(got, mu) <= 1e-9


def test_one_dimensional_closed_form():
    # barycenter of 1-d Gaussians: mean of means, mean of sds
    got = frechet_mean(
        [GaussianMeasure([0.0], [[1.0]]), GaussianMeasure([2.0], [[9.0]])]
    )
    np.testing.assert_allclose(got.mean, [1.0], atol=1e-9)
    np.testing.assert_allclose(got.cov, [[4.0]], atol=1e-6)


def test_weighted_one_dimensional():
    # weighted sds: 0.25 * 1 + 0.75 * 3 = 2.5
    got = frechet_mean(
        [GaussianMeasure([0.0], [[1.0]]), GaussianMeasure([4.0], [[9.0]])],
        weights=[0.25, 0.75],
    )
    np.testing.assert_allclose(got.mean, [3.0], atol=1e-9)
    np.testing.assert_allclose(got.cov, [[6.25]], atol=1e-6)


def test_commuting_diagonal_oracle():
    got = frechet_mean(
        [
            GaussianMeasure([0.0, 0.0], np.diag([1.0, 4.0])),
            GaussianMeasure([0.0, 0.0], np.diag([9.0, 16.0])),
        ]
    )
    np.testing.assert_allclose(got.cov, np.diag([4.0, 9.0]), atol=1e-6)


def test_first_order_condition_random_3d():
    rng = np.random.default_rng(0)
    for _ in range(5):
        measures = []
        for _ in range(7):
            a = rng.standard_normal((3, 3))
            measures.append(
                GaussianMeasure(rng.standard_normal(3), a @ a.T + 0.3 * np.eye(3))
            )
        center = frechet_mean(measures)
        ref = ReferenceMeasure(center)
        logs = [log_map(m, ref) for m in measures]
        avg = TangentVector(
            np.mean([u.a for u in logs], axis=0), np.mean([u.V for u in logs], axis=0)
        )
        assert tangent_norm(avg, ref) <= 1e-6


def test_rejects_empty():
    with pytest.raises(EmptyInput):
        frechet_mean([])


def test_rejects_all_singular():
    zero = GaussianMeasure([0.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(DegenerateInput):
        frechet_mean([zero, zero])


def test_rejects_bad_weights():
    mus = [GaussianMeasure([0.0], [[1.0]]), GaussianMeasure([1.0], [[1.0]])]
    with pytest.raises(DimensionMismatch):
        frechet_mean(mus, weights=[1.0])
    with pytest.raises(DegenerateInput):
        frechet_mean(mus, weights=[-1.0, 2.0])


def test_zero_weight_singular_member_is_ignored():
    good = GaussianMeasure([0.0], [[4.0]])
    singular = GaussianMeasure([5.0], [[0.0]])
    got = frechet_mean([good, singular], weights=[1.0, 0.0])
    assert wasserstein_distance(got, good) <= 1e-9


def test_singular_member_with_positive_weight():
    # one singular input is fine as long as another is SPD
    got = frechet_mean(
        [GaussianMeasure([0.0], [[0.0]]), GaussianMeasure([0.0], [[4.0]])]
    )
    np.testing.assert_allclose(got.cov, [[1.0]], atol=1e-6)
