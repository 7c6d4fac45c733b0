"""Tests for the numerical kernels."""

import itertools

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from amplifier_module_tool_committee_machine.errors import (
    DomainError,
    NonPsd,
    SingularCovariance,
)
from amplifier_module_tool_committee_machine.numerics import (
    Rng,
    bvn_cdf,
    bvn_upper,
    clip_psd,
    gauss_hermite,
    h_function,
    half_line_rule,
    is_psd,
    log_h,
    mvn_orthant_prob,
    mvn_truncated_moments,
    orthant_moments_1d,
    orthant_moments_2d,
    orthant_moments_mc,
    polar_rule,
    spd_sqrt,
    symmetric_gradient,
)

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
SIGNS_2D = [(1, 1), (1, -1), (-1, 1), (-1, -1)]


class TestSpecialFunctions:
    """Tests for H and log H."""

    def test_h_values(self):
        assert h_function(0.0) == pytest.approx(0.5)
        assert h_function(1.0) == pytest.approx(0.158655, abs=1e-6)

    def test_h_vectorized(self):
        out = h_function(np.array([-1.0, 0.0, 1.0]))
        assert out.shape == (3,)
        assert out[0] + out[2] == pytest.approx(1.0)

    def test_log_h_far_tail(self):
        # H(40) underflows in double precision but its log does not
        assert np.isfinite(log_h(40.0))
        assert log_h(40.0) < -800


class TestSymmetricMatrices:
    """Tests for PSD helpers."""

    def test_spd_sqrt_diagonal(self):
        np.testing.assert_allclose(spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12)

    def test_spd_sqrt_squares_back(self):
        M = np.array([[2.0, 0.5], [0.5, 1.0]])
        S = spd_sqrt(M)
        np.testing.assert_allclose(S @ S, M, atol=1e-12)

    def test_spd_sqrt_rejects_negative_eigenvalue(self):
        with pytest.raises(NonPsd):
            spd_sqrt(np.diag([1.0, -1.0]))

    def test_clip_psd_counts_repairs(self):
        repaired, n_clipped = clip_psd(np.diag([1.0, -1.0]), floor=0.0)
        assert n_clipped == 1
        np.testing.assert_allclose(repaired, np.diag([1.0, 0.0]), atol=1e-12)
        assert is_psd(repaired)

    def test_clip_psd_leaves_psd_alone(self):
        M = np.array([[1.0, 0.2], [0.2, 1.0]])
        repaired, n_clipped = clip_psd(M)
        assert n_clipped == 0
        np.testing.assert_allclose(repaired, M)

    def test_symmetric_gradient(self):
        """d Tr(q q) = Tr(2 q dq) for symmetric perturbations."""
        q = np.array([[1.0, 0.3], [0.3, 2.0]])
        grad = symmetric_gradient(lambda m: float(np.sum(m * m)), q)
        np.testing.assert_allclose(grad, 2.0 * q, atol=1e-6)


class TestQuadrature:
    """Tests for the Gaussian quadrature rules."""

    def test_gauss_hermite_second_moment(self):
        assert gauss_hermite(2).expect(lambda x: x**2) == pytest.approx(1.0, abs=1e-14)

    def test_gauss_hermite_fourth_moment(self):
        assert gauss_hermite(20).expect(lambda x: x**4) == pytest.approx(3.0, abs=1e-12)

    def test_gauss_hermite_symmetry(self):
        assert gauss_hermite(50).expect(h_function) == pytest.approx(0.5, abs=1e-12)

    def test_gauss_hermite_weights_sum_to_one(self):
        assert gauss_hermite(40).weights.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("n_nodes", [1, 201])
    def test_gauss_hermite_rejects_node_count(self, n_nodes):
        with pytest.raises(DomainError):
            gauss_hermite(n_nodes)

    def test_tensor_rule(self):
        points, weights = gauss_hermite(10).tensor(2)
        assert points.shape == (100, 2)
        assert weights @ (points[:, 0] ** 2 * points[:, 1] ** 2) == pytest.approx(1.0)

    def test_half_line_rule_integrates_a_step(self):
        points, weights = half_line_rule()
        assert weights.sum() == pytest.approx(1.0)
        assert weights @ (points[:, 0] > 0) == pytest.approx(0.5)
        assert weights @ points[:, 0] ** 2 == pytest.approx(1.0)

    def test_polar_rule_integrates_an_orthant(self):
        points, weights = polar_rule(np.eye(2))
        assert weights.sum() == pytest.approx(1.0, abs=1e-10)
        inside = (points[:, 0] > 0) & (points[:, 1] > 0)
        assert weights @ inside == pytest.approx(0.25, abs=1e-8)
        assert weights @ points[:, 0] ** 2 == pytest.approx(1.0, abs=1e-8)

    def test_polar_rule_ignores_duplicate_lines(self):
        points, weights = polar_rule(np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]]))
        assert weights.sum() == pytest.approx(1.0, abs=1e-10)


class TestBivariateNormal:
    """Tests for the bivariate normal CDF."""

    @pytest.mark.parametrize("r", [-0.9, -0.3, 0.0, 0.5, 0.99])
    def test_origin(self, r):
        assert bvn_cdf(0.0, 0.0, r) == pytest.approx(0.25 + np.arcsin(r) / (2 * np.pi), abs=1e-12)

    def test_independent(self):
        assert bvn_cdf(0.7, -0.4, 0.0) == pytest.approx((1 - h_function(0.7)) * (1 - h_function(-0.4)), abs=1e-12)

    @pytest.mark.parametrize("h,k,r", [(0.3, 1.2, 0.6), (-1.0, 0.5, -0.4), (2.0, -2.0, 0.8)])
    def test_matches_scipy(self, h, k, r):
        expected = multivariate_normal(mean=[0, 0], cov=[[1, r], [r, 1]]).cdf([h, k])
        assert bvn_cdf(h, k, r) == pytest.approx(expected, abs=1e-5)

    def test_upper_tail_keeps_relative_accuracy(self):
        expected = h_function(6.0) ** 2
        assert bvn_upper(6.0, 6.0, 0.0) == pytest.approx(expected, rel=1e-6)


class TestOrthants:
    """Tests for orthant probabilities and truncated moments."""

    def test_probability_identity(self):
        assert mvn_orthant_prob([0, 0], np.eye(2), [1, 1]) == pytest.approx(0.25, abs=1e-12)

    def test_probability_correlated(self):
        cov = np.array([[1.0, 0.5], [0.5, 1.0]])
        assert mvn_orthant_prob([0, 0], cov, [1, 1]) == pytest.approx(1 / 3, abs=1e-10)

    def test_probability_far_mean(self):
        assert mvn_orthant_prob([10, 10], np.eye(2), [1, 1]) == pytest.approx(1.0, abs=1e-12)

    def test_probability_three_dimensions_by_sampling(self):
        first = mvn_orthant_prob(np.zeros(3), np.eye(3), [1, 1, 1])
        second = mvn_orthant_prob(np.zeros(3), np.eye(3), [1, 1, 1])
        assert first == second
        assert first == pytest.approx(0.125, abs=0.005)

    def test_truncated_first_moment_1d(self):
        mass, first, _ = orthant_moments_1d(0.0, 1.0, 1.0)
        assert mass == pytest.approx(0.5)
        assert first / mass == pytest.approx(SQRT_2_OVER_PI, abs=1e-5)

    def test_truncated_moments_2d(self):
        mass, mean, second = mvn_truncated_moments([0, 0], np.eye(2), [1, 1])
        assert mass == pytest.approx(0.25)
        np.testing.assert_allclose(mean, [SQRT_2_OVER_PI] * 2, atol=1e-5)
        np.testing.assert_allclose(second, [[1.0, 2 / np.pi], [2 / np.pi, 1.0]], atol=1e-8)

    def test_truncated_moments_negative_orthant(self):
        _, mean, _ = mvn_truncated_moments([0, 0], np.eye(2), [-1, 1])
        np.testing.assert_allclose(mean, [-SQRT_2_OVER_PI, SQRT_2_OVER_PI], atol=1e-5)

    def test_singular_covariance(self):
        with pytest.raises(SingularCovariance):
            mvn_orthant_prob([0, 0], np.array([[1.0, 2.0], [2.0, 1.0]]), [1, 1])

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            mvn_orthant_prob([0, 0, 0], np.eye(2), [1, 1])

    def test_bad_signs(self):
        with pytest.raises(DomainError):
            mvn_orthant_prob([0, 0], np.eye(2), [1, 0])

    @pytest.mark.parametrize(
        "mean,cov",
        [
            ([0.3, -0.5], [[1.2, 0.4], [0.4, 0.7]]),
            ([-1.5, 2.0], [[0.5, -0.3], [-0.3, 0.9]]),
            ([0.0, 0.0], [[1.0, 0.95], [0.95, 1.0]]),
        ],
    )
    def test_orthants_add_up_to_the_whole_plane(self, mean, cov):
        mass_total, first_total, second_total = 0.0, np.zeros(2), np.zeros((2, 2))
        for signs in SIGNS_2D:
            mass, first, second = mvn_truncated_moments(mean, cov, signs)
            mass_total += mass
            first_total += mass * first
            second_total += mass * second
        assert mass_total == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(first_total, 0.0, atol=1e-8)
        np.testing.assert_allclose(second_total, cov, atol=1e-8)

    def test_orthants_add_up_in_three_dimensions(self):
        cov = np.array([[1.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 1.0]])
        mass_total, first_total = 0.0, np.zeros(3)
        for signs in itertools.product((-1, 1), repeat=3):
            mass, first, _ = mvn_truncated_moments([0.2, -0.1, 0.4], cov, signs)
            mass_total += mass
            first_total += mass * first
        assert mass_total == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(first_total, 0.0, atol=0.02)

    @pytest.mark.parametrize("signs", SIGNS_2D)
    def test_exact_moments_agree_with_sampling(self, signs):
        mean = np.array([0.3, -0.5])
        cov = np.array([[1.2, 0.4], [0.4, 0.7]])
        samples = 200_000
        mass, first, second = orthant_moments_2d(mean, cov, signs)
        mass_mc, first_mc, second_mc = orthant_moments_mc(mean, cov, signs, samples=samples)
        # standard errors bounded through E[y^2] and E[y_k^2 y_l^2]
        sd = np.sqrt(np.diag(cov))
        assert abs(mass - mass_mc) < 4 * np.sqrt(mass * (1 - mass) / samples)
        assert np.all(np.abs(first - first_mc) < 4 * sd / np.sqrt(samples))
        assert np.all(np.abs(second - second_mc) < 4 * np.sqrt(3.0) * np.outer(sd, sd) / np.sqrt(samples))


class TestRng:
    """Tests for the seeded stream source."""

    def test_same_seed_same_draws(self):
        a, b = Rng(3), Rng(3)
        np.testing.assert_array_equal(a.generator().standard_normal(5), b.generator().standard_normal(5))

    def test_streams_differ(self):
        rng = Rng(3)
        first = rng.generator().standard_normal(5)
        second = rng.generator().standard_normal(5)
        assert not np.array_equal(first, second)
        assert rng.stream == 2

    def test_spawn_does_not_advance(self):
        rng = Rng(3)
        np.testing.assert_array_equal(rng.spawn(0).standard_normal(3), rng.generator().standard_normal(3))
        assert rng.stream == 1
