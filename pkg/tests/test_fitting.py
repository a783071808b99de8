import numpy as np
import pytest

from gwreg.errors import EmptyInput, LengthMismatch
from gwreg.geometry import GaussianMeasure, ReferenceMeasure, TangentVector
from gwreg.regression import (
    fit_basic,
    fit_distributions,
    fit_scalar,
    model_from_json,
    model_to_json,
    predict_scalar,
    tangent_gram,
)
from gwreg.tensors import (
    contract,
    free_coord_count,
    half_vec,
    identified_to_vec,
    tangent_from_half_vec,
    vec_to_identified,
)


def random_tangent(rng, d):
    v = rng.standard_normal((d, d))
    return TangentVector(rng.standard_normal(d), (v + v.T) / 2)


def random_reference(rng, d):
    a = rng.standard_normal((d, d))
    return ReferenceMeasure.from_moments(rng.standard_normal(d), a @ a.T + 0.5 * np.eye(d))


class TestTangentGram:
    def test_standard_reference_matches_frobenius(self):
        rng = np.random.default_rng(0)
        for d in (1, 2, 4):
            ref = ReferenceMeasure.standard(d)
            gram = tangent_gram(ref)
            for _ in range(5):
                u = random_tangent(rng, d)
                z = half_vec(u.as_matrix())
                # tangent norm at the standard reference is the Frobenius
                # norm of the full (a | V) layout
                assert z @ gram @ z == pytest.approx(
                    np.sum(u.as_matrix() ** 2), rel=1e-12
                )

    def test_reproduces_tangent_norm(self):
        rng = np.random.default_rng(1)
        for d in (1, 3):
            ref = random_reference(rng, d)
            gram = tangent_gram(ref)
            from gwreg.geometry import tangent_norm

            for _ in range(5):
                u = random_tangent(rng, d)
                z = half_vec(u.as_matrix())
                assert np.sqrt(z @ gram @ z) == pytest.approx(
                    tangent_norm(u, ref), rel=1e-10
                )


class TestFitBasic:
    def test_noiseless_recovery(self):
        rng = np.random.default_rng(42)
        d = 2
        ref = ReferenceMeasure.standard(d)
        theta = rng.standard_normal(free_coord_count(d) ** 2)
        truth = vec_to_identified(theta, d, d)
        xs = [random_tangent(rng, d) for _ in range(12)]
        ys = [contract(x, truth) for x in xs]
        fitted = fit_basic(xs, ys, ref)
        for x, y in zip(xs, ys):
            np.testing.assert_allclose(
                contract(x, fitted).as_matrix(), y.as_matrix(), atol=1e-8
            )

    def test_single_point_interpolates(self):
        rng = np.random.default_rng(1)
        ref = ReferenceMeasure.standard(2)
        x = random_tangent(rng, 2)
        y = random_tangent(rng, 2)
        fitted = fit_basic([x], [y], ref)
        np.testing.assert_allclose(
            contract(x, fitted).as_matrix(), y.as_matrix(), atol=1e-10
        )

    def test_zero_responses_give_zero_tensor(self):
        rng = np.random.default_rng(2)
        ref = ReferenceMeasure.standard(2)
        xs = [random_tangent(rng, 2) for _ in range(8)]
        ys = [TangentVector.zero(2) for _ in range(8)]
        fitted = fit_basic(xs, ys, ref)
        np.testing.assert_allclose(fitted.entries, 0.0, atol=1e-12)

    def test_sur_equivalence_with_weighted_normal_equations(self):
        # the per-coordinate OLS must agree with a direct minimization of
        # the Gram-weighted objective solved via kronecker normal equations
        rng = np.random.default_rng(3)
        d1, d2, n = 2, 2, 40
        ref = random_reference(rng, d2)
        gram = tangent_gram(ref)
        xs = [random_tangent(rng, d1) for _ in range(n)]
        ys = [random_tangent(rng, d2) for _ in range(n)]
        feats = np.stack([half_vec(x.as_matrix()) for x in xs])
        targets = np.stack([half_vec(y.as_matrix()) for y in ys])

        fitted = fit_basic(xs, ys, ref)
        ols_fitted = np.stack([half_vec(contract(x, fitted).as_matrix()) for x in xs])

        moment = feats.T @ feats
        big = np.kron(gram, moment)
        rhs = (gram @ (targets.T @ feats)).reshape(-1)
        theta = np.linalg.solve(big, rhs)
        coef = theta.reshape(targets.shape[1], feats.shape[1])
        direct_fitted = feats @ coef.T
        np.testing.assert_allclose(ols_fitted, direct_fitted, atol=1e-8)

    def test_errors(self):
        ref = ReferenceMeasure.standard(2)
        with pytest.raises(EmptyInput):
            fit_basic([], [], ref)
        rng = np.random.default_rng(4)
        with pytest.raises(LengthMismatch):
            fit_basic([random_tangent(rng, 2)], [], ref)


class TestFitScalar:
    def test_zero_targets(self):
        rng = np.random.default_rng(5)
        xs = [random_tangent(rng, 2) for _ in range(6)]
        np.testing.assert_allclose(fit_scalar(xs, np.zeros(6)), 0.0, atol=1e-12)

    def test_forward_recovery(self):
        rng = np.random.default_rng(6)
        d, n = 2, 20
        coef_vec = rng.standard_normal(free_coord_count(d))
        from gwreg.tensors import matrix_from_half_vec

        coef = matrix_from_half_vec(coef_vec, d)
        xs = [random_tangent(rng, d) for _ in range(n)]
        zs = [predict_scalar(coef, x) for x in xs]
        fitted = fit_scalar(xs, zs)
        for x, z in zip(xs, zs):
            assert predict_scalar(fitted, x) == pytest.approx(z, abs=1e-8)

    def test_simple_regression_slope_oracle(self):
        rng = np.random.default_rng(7)
        xvals = rng.standard_normal(30)
        zvals = 2.5 * xvals + 0.1 * rng.standard_normal(30)
        xs = [TangentVector([x], [[0.0]]) for x in xvals]
        fitted = fit_scalar(xs, zvals)
        slope = float(xvals @ zvals / (xvals @ xvals))
        assert fitted[0, 0] == pytest.approx(slope, abs=1e-10)


class TestModelSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(8)
        d = 2
        measures = []
        for _ in range(20):
            a = rng.standard_normal((d, d))
            measures.append(
                GaussianMeasure(rng.standard_normal(d), a @ a.T + 0.4 * np.eye(d))
            )
        model = fit_distributions(measures[:10], measures[10:], kind="basic")
        text = model_to_json(model)
        back = model_from_json(text)
        np.testing.assert_allclose(back.tensor.entries, model.tensor.entries)
        np.testing.assert_allclose(back.ref_in.mean, model.ref_in.mean)
        np.testing.assert_allclose(back.ref_out.cov, model.ref_out.cov)
        assert back.kind == model.kind

    def test_rejects_malformed(self):
        from gwreg.errors import InputError

        with pytest.raises(InputError):
            model_from_json("not json at all")
        with pytest.raises(InputError):
            model_from_json("{}")


class TestIdentifiedVecConsistency:
    def test_fit_then_vectorize_round_trip(self):
        rng = np.random.default_rng(9)
        ref = ReferenceMeasure.standard(2)
        xs = [random_tangent(rng, 2) for _ in range(15)]
        ys = [random_tangent(rng, 2) for _ in range(15)]
        fitted = fit_basic(xs, ys, ref)
        theta = identified_to_vec(fitted)
        rebuilt = vec_to_identified(theta, 2, 2)
        np.testing.assert_allclose(rebuilt.entries, fitted.entries)
