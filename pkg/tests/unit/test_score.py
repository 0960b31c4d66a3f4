import numpy as np
import pytest

from soliplex.safepolicy.core import RngStream
from soliplex.safepolicy.score import EnergyFn
from soliplex.safepolicy.score import ScoreError
from soliplex.safepolicy.score import gaussian_mollified_score
from soliplex.safepolicy.score import mc_score_target
from soliplex.safepolicy.score import mc_score_targets_batch
from soliplex.safepolicy.score import quadrature_score


def gaussian(beta, varsigma, mu, shift=0.0, scale=1.0) -> EnergyFn:
    mu = np.asarray(mu, dtype=float)

    def value(a):
        diff = np.asarray(a) - mu
        return scale * beta * np.sum(diff * diff, axis=-1) / (2 * varsigma**2) + shift

    def grad(a):
        return scale * beta * (np.asarray(a) - mu) / varsigma**2

    return EnergyFn(value=value, grad=grad, descriptor="gaussian")


class TestClosedForm:
    def test_formula(self):
        np.testing.assert_allclose(gaussian_mollified_score(np.zeros(2), 1.0, 0.5, [1.0, -2.0]), [-0.8, 1.6])


class TestQuadratureScore:
    @pytest.mark.parametrize("dim", [1, 2])
    @pytest.mark.parametrize("beta,varsigma,sigma", [(1.0, 1.0, 0.5), (0.3, 0.7, 0.2), (2.0, 0.5, 0.4)])
    def test_matches_closed_form(self, dim, beta, varsigma, sigma):
        mu = np.linspace(0.1, 0.3, dim)
        a_tau = np.linspace(-0.4, 0.5, dim)
        got = quadrature_score(gaussian(beta, varsigma, mu), a_tau, sigma, beta)
        np.testing.assert_allclose(got, gaussian_mollified_score(mu, varsigma, sigma, a_tau), atol=1e-8)

    def test_zero_noise_is_scaled_gradient(self):
        f = gaussian(2.0, 1.0, [0.0, 0.0])
        np.testing.assert_allclose(quadrature_score(f, [0.5, -0.5], 0.0, 2.0), [-0.5, 0.5])

    def test_rejects_high_dimension(self):
        with pytest.raises(ScoreError):
            quadrature_score(gaussian(1.0, 1.0, np.zeros(3)), np.zeros(3), 0.5, 1.0)

    def test_rejects_non_positive_beta(self):
        with pytest.raises(ScoreError):
            quadrature_score(gaussian(1.0, 1.0, np.zeros(2)), np.zeros(2), 0.5, 0.0)


class TestMcScoreTarget:
    def test_weights_normalized_for_huge_energies(self):
        f = gaussian(1.0, 1.0, [0.0, 0.0], scale=1e6)
        target = mc_score_target(f, [0.3, -0.2], 0.5, 1.0, 64, RngStream(0, 0))
        assert np.all(np.isfinite(target.value))
        assert target.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert 1.0 <= target.ess <= 64.0

    def test_invariant_to_constant_shift(self):
        base = mc_score_target(gaussian(1.0, 1.0, [0.0, 0.0]), [0.3, -0.2], 0.5, 1.0, 32, RngStream(4, 0))
        shifted = mc_score_target(gaussian(1.0, 1.0, [0.0, 0.0], shift=1000.0), [0.3, -0.2], 0.5, 1.0, 32, RngStream(4, 0))
        np.testing.assert_allclose(shifted.weights, base.weights, atol=1e-12)
        np.testing.assert_allclose(shifted.value, base.value, atol=1e-12)

    def test_single_sample_has_unit_weight(self):
        target = mc_score_target(gaussian(1.0, 1.0, [0.0, 0.0]), [0.3, -0.2], 0.5, 1.0, 1, RngStream(0, 0))
        np.testing.assert_array_equal(target.weights, [1.0])
        assert target.ess == 1.0

    def test_converges_to_closed_form(self):
        target = mc_score_target(gaussian(1.0, 1.0, [0.0, 0.0]), [0.3, -0.2], 0.5, 1.0, 200_000, RngStream(2, 0))
        np.testing.assert_allclose(target.value, gaussian_mollified_score(np.zeros(2), 1.0, 0.5, [0.3, -0.2]), atol=6e-3)

    def test_non_finite_energy_names_sample(self):
        def value_and_grad(a):
            v = np.sum(a * a, axis=-1)
            v[..., 3] = np.nan
            return v, 2 * a

        f = EnergyFn(value=None, grad=None, descriptor="broken", value_and_grad=value_and_grad)
        with pytest.raises(ScoreError, match="sample 3"):
            mc_score_target(f, [0.0, 0.0], 0.5, 1.0, 8, RngStream(0, 0))

    @pytest.mark.parametrize("sigma,N", [(0.0, 4), (-1.0, 4), (0.5, 0)])
    def test_invalid_arguments(self, sigma, N):
        with pytest.raises(ScoreError):
            mc_score_target(gaussian(1.0, 1.0, [0.0]), [0.0], sigma, 1.0, N, RngStream(0, 0))


class TestMcScoreTargetsBatch:
    def test_flags_non_finite_rows(self):
        def value_and_grad(a):
            v = np.sum(a * a, axis=-1)
            v[1, 2] = np.inf
            return v, 2 * a

        f = EnergyFn(value=None, grad=None, value_and_grad=value_and_grad)
        batch = mc_score_targets_batch(f, np.zeros((3, 2)), 0.5, 1.0, 5, RngStream(0, 0))
        np.testing.assert_array_equal(batch.finite, [True, False, True])
        np.testing.assert_array_equal(batch.first_bad, [-1, 2, -1])
        assert np.all(np.isnan(batch.values[1]))
        assert np.all(np.isfinite(batch.values[[0, 2]]))
        np.testing.assert_allclose(batch.weights.sum(axis=1), 1.0, atol=1e-12)

    def test_per_row_noise_levels(self):
        f = gaussian(1.0, 1.0, [0.0])
        batch = mc_score_targets_batch(f, np.zeros((2, 1)), np.array([0.1, 0.9]), 1.0, 16, RngStream(0, 0))
        assert batch.values.shape == (2, 1)
        assert batch.ess.shape == (2,)

    def test_matches_single_row_call(self):
        f = gaussian(1.0, 1.0, [0.2, 0.1])
        batch = mc_score_targets_batch(f, np.array([[0.3, -0.2]]), 0.5, 1.0, 16, RngStream(8, 0))
        single = mc_score_target(f, [0.3, -0.2], 0.5, 1.0, 16, RngStream(8, 0))
        np.testing.assert_array_equal(batch.values[0], single.value)


class TestEnergyOracle:
    def test_accepts_exact_gradient(self):
        g = gaussian(1.0, 1.0, [0.1, 0.2])
        f = EnergyFn.oracle(g.value, g.grad, "gaussian", check_points=np.array([[0.0, 0.0], [0.5, -0.3]]))
        assert f.descriptor == "gaussian"

    def test_rejects_wrong_gradient(self):
        g = gaussian(1.0, 1.0, [0.1, 0.2])
        with pytest.raises(ScoreError, match="finite differences"):
            EnergyFn.oracle(g.value, lambda a: 2 * g.grad(a), "doubled", check_points=np.array([[0.5, -0.3]]))
