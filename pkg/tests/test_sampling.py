import numpy as np
import pytest

from gwreg.errors import DegenerateReference, DimensionMismatch, EmptyBlock
from gwreg.geometry import (
    GaussianMeasure,
    ReferenceMeasure,
    TangentVector,
    exp_map,
    log_map,
    wasserstein_distances,
)
from gwreg.regression import fit_distributions, predict_batch
from gwreg.sampling import SampleBlock, block_moments, empirical_moments, fit_from_samples
from gwreg.simulation import sample_block
from gwreg.tensors import contract, vec_to_identified


class TestEmpiricalMoments:
    def test_single_row(self):
        got = empirical_moments(np.array([[1.0, 2.0]]))
        np.testing.assert_allclose(got.mean, [1.0, 2.0])
        np.testing.assert_allclose(got.cov, 0.0)

    def test_two_rows_hand_computed(self):
        got = empirical_moments(np.array([[0.0, 0.0], [2.0, 2.0]]))
        np.testing.assert_allclose(got.mean, [1.0, 1.0])
        np.testing.assert_allclose(got.cov, [[1.0, 1.0], [1.0, 1.0]])

    def test_one_dimensional_three_points(self):
        got = empirical_moments(np.array([[0.0], [1.0], [2.0]]))
        np.testing.assert_allclose(got.mean, [1.0])
        np.testing.assert_allclose(got.cov, [[2.0 / 3.0]])

    def test_biased_divisor(self):
        # variance of {-1, +1} under 1/N is exactly 1, not 2
        got = empirical_moments(np.array([[-1.0], [1.0]]))
        np.testing.assert_allclose(got.cov, [[1.0]])

    def test_rejects_empty(self):
        with pytest.raises(EmptyBlock):
            empirical_moments(np.zeros((0, 2)))

    def test_proxy_covariances_psd(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            obs = rng.standard_normal((int(rng.integers(2, 8)), 3))
            got = empirical_moments(obs)
            assert np.linalg.eigvalsh(got.cov)[0] >= -1e-12


class TestSampleBlock:
    def test_warns_on_single_observation_unit(self):
        with pytest.warns(UserWarning):
            SampleBlock((np.zeros((1, 2)), np.zeros((3, 2))))

    def test_rejects_mixed_dimensions(self):
        with pytest.raises(DimensionMismatch):
            SampleBlock((np.zeros((3, 2)), np.zeros((3, 4))))

    def test_allows_unequal_counts(self):
        block = SampleBlock((np.zeros((3, 2)), np.zeros((5, 2))))
        assert block.n_units == 2

    def test_from_array(self):
        block = SampleBlock.from_array(np.zeros((4, 6, 2)))
        assert block.n_units == 4 and block.dim == 2


class TestFitFromSamples:
    def _mixture(self, rng, n, d=2):
        preds, resps = [], []
        truth = vec_to_identified(rng.uniform(-0.5, 0.5, 25), d, d)
        ref = ReferenceMeasure.standard(d)
        for _ in range(n):
            q = rng.standard_normal((d, d)) * 0.3
            cov = q @ q.T + np.diag(rng.uniform(0.5, 1.5, d))
            mu = GaussianMeasure(rng.standard_normal(d) * 0.5, cov)
            x = log_map(mu, ref)
            y = contract(x, truth) + TangentVector(
                0.1 * rng.standard_normal(d), 0.1 * np.diag(rng.uniform(-0.5, 0.5, d))
            )
            w = np.linalg.eigvalsh(y.V + np.eye(d))[0]
            eta = 1.0 if w >= 0 else 1.0 / (1.0 - w)
            preds.append(mu)
            resps.append(exp_map(eta * y, ref))
        return preds, resps

    def test_exact_moment_bypass_equals_direct_fit(self):
        rng = np.random.default_rng(1)
        preds, resps = self._mixture(rng, 25)
        direct = fit_distributions(preds, resps, kind="basic")
        bypass = fit_from_samples(preds, resps, kind="basic")
        np.testing.assert_allclose(
            bypass.tensor.entries, direct.tensor.entries, atol=1e-12
        )
        np.testing.assert_allclose(bypass.ref_in.mean, direct.ref_in.mean, atol=1e-12)

    def test_large_sample_consistency(self):
        rng = np.random.default_rng(5)
        preds, resps = self._mixture(rng, 30)
        direct = fit_distributions(preds, resps, kind="basic")
        pb = sample_block(rng, preds, 5000)
        rb = sample_block(rng, resps, 5000)
        sampled = fit_from_samples(pb, rb, kind="basic")
        means = np.stack([p.mean for p in preds])
        covs = np.stack([p.cov for p in preds])
        m1, c1, _, _ = predict_batch(direct, means, covs)
        m2, c2, _, _ = predict_batch(sampled, means, covs)
        assert wasserstein_distances(m1, c1, m2, c2).max() <= 0.05

    def test_single_unit_interpolates(self):
        rng = np.random.default_rng(2)
        preds, resps = self._mixture(rng, 1)
        model = fit_from_samples(
            preds,
            resps,
            kind="basic",
            ref_in=ReferenceMeasure(preds[0]),
            ref_out=ReferenceMeasure(resps[0]),
        )
        out, oc, _, _ = predict_batch(
            model, preds[0].mean[None], preds[0].cov[None]
        )
        gap = wasserstein_distances(
            out, oc, resps[0].mean[None], resps[0].cov[None]
        )[0]
        assert gap <= 1e-8

    def test_degenerate_reference_raises(self):
        flat = [
            GaussianMeasure([0.0, 0.0], np.diag([1.0, 0.0])),
            GaussianMeasure([1.0, 0.0], np.diag([2.0, 0.0])),
        ]
        with pytest.raises(DegenerateReference):
            fit_from_samples(flat, flat, kind="basic")

    def test_block_input_path(self):
        rng = np.random.default_rng(3)
        preds, resps = self._mixture(rng, 10)
        pb = sample_block(rng, preds, 200)
        rb = sample_block(rng, resps, 200)
        model = fit_from_samples(pb, rb, kind="basic")
        assert model.kind == "basic"
        proxies = block_moments(pb)
        assert len(proxies) == 10
