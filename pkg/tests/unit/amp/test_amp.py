"""Tests for approximate message passing on finite instances."""

import numpy as np
import pytest
from scipy.optimize import brentq

from amplifier_module_tool_committee_machine.amp import (
    InputBlocks,
    amp_run,
    amp_step,
    empirical_gen_error,
    generate_instance,
    init_state,
    instance_from_spec,
    instance_spec,
    measure_overlap,
    predict_label,
    stopping_reason,
)
from amplifier_module_tool_committee_machine.channels import output_scores
from amplifier_module_tool_committee_machine.config import DEFAULT_NUMERICS, NumericsConfig
from amplifier_module_tool_committee_machine.errors import DomainError, NumericalError
from amplifier_module_tool_committee_machine.models import AmpInit, ChannelModel, InitKind, PriorModel
from amplifier_module_tool_committee_machine.numerics import clip_psd
from amplifier_module_tool_committee_machine.state_evolution import run_from


@pytest.fixture
def committee_instance():
    return generate_instance(100, 1.0, PriorModel.gaussian(2), ChannelModel.committee(2), seed=3)


class TestInstances:
    """Tests for teacher instance generation."""

    def test_shapes(self, committee_instance):
        inst = committee_instance
        assert inst.X.shape == (100, 100)
        assert inst.W_star.shape == (100, 2)
        assert inst.Y.shape == (100,)
        assert set(np.unique(inst.Y)) <= {-1.0, 0.0, 1.0}

    def test_sample_count_rounds(self):
        inst = generate_instance(30, 0.51, PriorModel.gaussian(1), ChannelModel.committee(1), seed=1)
        assert inst.m == 15

    def test_same_seed_same_instance(self):
        prior, ch = PriorModel.rademacher(2), ChannelModel.parity()
        a = generate_instance(50, 2.0, prior, ch, seed=11)
        b = generate_instance(50, 2.0, prior, ch, seed=11)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.W_star, b.W_star)
        np.testing.assert_array_equal(a.Y, b.Y)

    def test_different_seeds_differ(self):
        prior, ch = PriorModel.gaussian(2), ChannelModel.committee(2)
        a = generate_instance(50, 1.0, prior, ch, seed=1)
        b = generate_instance(50, 1.0, prior, ch, seed=2)
        assert not np.array_equal(a.X, b.X)

    def test_regenerate_from_spec(self, committee_instance):
        again = instance_from_spec(committee_instance.spec)
        np.testing.assert_array_equal(again.Y, committee_instance.Y)

    def test_binary_teacher(self):
        inst = generate_instance(40, 1.0, PriorModel.rademacher(2), ChannelModel.committee(2), seed=5)
        assert set(np.unique(inst.W_star)) == {-1.0, 1.0}

    def test_labels_follow_teacher(self):
        inst = generate_instance(40, 1.0, PriorModel.gaussian(2), ChannelModel.parity(), seed=5)
        z = inst.X @ inst.W_star / np.sqrt(inst.n)
        np.testing.assert_array_equal(inst.Y, np.sign(z[:, 0]) * np.sign(z[:, 1]))

    @pytest.mark.parametrize("n,alpha", [(5, 1.0), (100, -0.5)])
    def test_domain(self, n, alpha):
        with pytest.raises(DomainError):
            generate_instance(n, alpha, PriorModel.gaussian(2), ChannelModel.committee(2), seed=0)

    def test_hidden_unit_mismatch(self):
        with pytest.raises(DomainError):
            generate_instance(50, 1.0, PriorModel.gaussian(2), ChannelModel.committee(3), seed=0)

    def test_descriptor_without_arrays(self):
        prior, ch = PriorModel.gaussian(2), ChannelModel.committee(2)
        spec = instance_spec(40, 1.5, prior, ch, seed=9)
        assert (spec.n, spec.m, spec.seed) == (40, 60, 9)
        assert generate_instance(40, 1.5, prior, ch, seed=9).m == spec.m


class TestOverlap:
    """Tests for overlap measurement."""

    def test_permuted_units_are_aligned(self):
        rng = np.random.default_rng(0)
        W_star = rng.standard_normal((5000, 2))
        _, q00, q01 = measure_overlap(W_star[:, ::-1].copy(), W_star)
        assert q00 == pytest.approx(1.0, abs=0.05)
        assert q01 == pytest.approx(0.0, abs=0.05)

    def test_raw_overlap_is_not_permuted(self):
        rng = np.random.default_rng(0)
        W_star = rng.standard_normal((5000, 2))
        q_emp, _, _ = measure_overlap(W_star[:, ::-1].copy(), W_star)
        assert abs(q_emp[0, 0]) < 0.1

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            measure_overlap(np.zeros((10, 2)), np.zeros((10, 3)))


class TestAmpIteration:
    """Tests for amp_step and amp_run."""

    def test_zero_samples_converge_in_one_step(self):
        inst = generate_instance(50, 0.0, PriorModel.gaussian(2), ChannelModel.committee(2), seed=1)
        _, report = amp_run(inst)
        assert report.converged
        assert report.iterations == 1
        assert report.stop_reason == "tol"
        assert report.q00 == pytest.approx(0.0, abs=1e-12)
        assert report.gen_error_closed == pytest.approx(0.25, abs=1e-8)

    def test_deterministic(self, committee_instance):
        state_a, report_a = amp_run(committee_instance, max_iters=5)
        state_b, report_b = amp_run(committee_instance, max_iters=5)
        np.testing.assert_array_equal(state_a.W_hat, state_b.W_hat)
        assert report_a.q00 == report_b.q00

    def test_iteration_cap(self, committee_instance):
        _, report = amp_run(committee_instance, max_iters=2, tol=1e-14)
        assert not report.converged
        assert report.iterations == 2
        assert report.stop_reason == "max-iters"
        assert len(report.trace) == 2
        assert {"t", "delta", "q00", "q01", "v_clipped", "sigma_clipped"} <= set(report.trace[0])

    def test_step_does_not_mutate_state(self, committee_instance):
        state = init_state(committee_instance)
        before = state.W_hat.copy()
        new = amp_step(state, committee_instance)
        np.testing.assert_array_equal(state.W_hat, before)
        assert new.t == 1
        assert new.C_hat.shape == (100, 2, 2)

    def test_posterior_covariances_stay_psd(self, committee_instance):
        state = init_state(committee_instance)
        for _ in range(3):
            state = amp_step(state, committee_instance)
        assert np.linalg.eigvalsh(state.C_hat).min() >= -1e-10

    @pytest.mark.parametrize("damping", [-0.1, 1.0])
    def test_damping_domain(self, committee_instance, damping):
        with pytest.raises(DomainError):
            amp_step(init_state(committee_instance), committee_instance, damping=damping)

    def test_informed_start_stays_near_teacher(self):
        inst = generate_instance(200, 2.5, PriorModel.rademacher(2), ChannelModel.committee(2), seed=7)
        _, report = amp_run(inst, init=AmpInit.INFORMED, max_iters=30)
        assert report.q00 > 0.9

    def test_linear_channel_matches_state_evolution(self):
        alpha, noise = 2.0, 0.5

        def residual(q):
            q_hat = alpha / (1.0 - q + noise)
            return q - q_hat / (1.0 + q_hat)

        expected = brentq(residual, 0.0, 1.0)
        inst = generate_instance(1000, alpha, PriorModel.gaussian(1), ChannelModel.linear(1, noise), seed=2)
        _, report = amp_run(inst, tol=1e-6, max_iters=200)
        assert report.converged
        assert report.q00 == pytest.approx(expected, abs=0.05)


def _dense_step(state, inst, onsager=True):
    """omega, V, g and B of one step, built from the full X**2."""
    X, n, m = inst.X, inst.n, inst.m
    squares = X**2
    V, _ = clip_psd((squares @ state.C_hat.reshape(n, 4) / n).reshape(m, 2, 2), DEFAULT_NUMERICS.eig_floor)
    omega = X @ state.W_hat / np.sqrt(n)
    if onsager:
        kernel = np.linalg.inv(state.Sigma) @ state.C_hat @ state.Sigma
        reaction = (squares @ kernel.reshape(n, 4) / n).reshape(m, 2, 2)
        omega = omega - np.einsum("mkl,ml->mk", reaction, state.g)
    _, g, dg = output_scores(inst.channel, inst.Y, omega, V)
    B = (squares.T @ dg.reshape(m, 4) / n).reshape(n, 2, 2)
    return omega, V, g, B


class TestStepAlgebra:
    """Tests for the blocked single pass over the training set."""

    def test_matches_full_products(self, committee_instance):
        first = amp_step(init_state(committee_instance), committee_instance)
        omega, V, g, B = _dense_step(first, committee_instance)
        second = amp_step(first, committee_instance)
        np.testing.assert_allclose(second.omega, omega, atol=1e-12)
        np.testing.assert_allclose(second.V, V, atol=1e-12)
        np.testing.assert_allclose(second.g, g, atol=1e-10)
        A, _ = clip_psd(-B, DEFAULT_NUMERICS.eig_floor)
        np.testing.assert_allclose(second.Sigma, np.linalg.inv(A), rtol=1e-6)

    def test_block_size_and_cache_do_not_change_the_step(self, committee_instance):
        first = amp_step(init_state(committee_instance), committee_instance)
        cached = amp_step(first, committee_instance)
        streamed = InputBlocks(committee_instance.X, NumericsConfig(amp_cache_bytes=0), rows=7)
        assert not streamed.cached
        other = amp_step(first, committee_instance, blocks=streamed)
        np.testing.assert_allclose(other.W_hat, cached.W_hat, atol=1e-12)
        np.testing.assert_allclose(other.C_hat, cached.C_hat, atol=1e-12)

    def test_streamed_blocks_cover_every_row(self, committee_instance):
        blocks = InputBlocks(committee_instance.X, NumericsConfig(amp_cache_bytes=0), rows=30)
        starts = []
        for start, block, squares in blocks:
            starts.append(start)
            np.testing.assert_array_equal(squares, block**2)
        assert starts == [0, 30, 60, 90]

    def test_without_memory_term_omega_is_the_plain_projection(self, committee_instance):
        first = amp_step(init_state(committee_instance), committee_instance)
        assert np.abs(first.g).max() > 0
        plain = amp_step(first, committee_instance, onsager=False)
        corrected = amp_step(first, committee_instance)
        np.testing.assert_allclose(plain.omega, committee_instance.X @ first.W_hat / np.sqrt(committee_instance.n), atol=1e-12)
        assert np.abs(corrected.omega - plain.omega).max() > 1e-3
        omega, _, _, _ = _dense_step(first, committee_instance, onsager=False)
        np.testing.assert_allclose(plain.omega, omega, atol=1e-12)


class TestStoppingRule:
    """Tests for the AMP stopping rule."""

    def test_tolerance(self):
        assert stopping_reason([1e-3, 5e-8], tol=1e-7, n=2000) == "tol"

    def test_no_deltas(self):
        assert stopping_reason([], tol=1e-7, n=2000) is None

    def test_stalled_below_noise_floor(self):
        deltas = [6.8e-7 * (1.0 + 0.01 * np.sin(k)) for k in range(40)]
        assert stopping_reason(deltas, tol=1e-7, n=2000) == "noise-floor"

    def test_still_decreasing(self):
        deltas = [1e-6 * 0.9**k for k in range(20)]
        assert stopping_reason(deltas, tol=1e-9, n=2000) is None

    def test_growing_update_is_not_a_stall(self):
        deltas = [1e-7 * 1.1**k for k in range(20)]
        assert stopping_reason(deltas, tol=1e-9, n=2000) is None

    def test_flat_above_noise_floor(self):
        # 1e-3 / sqrt(2000) is about 2.2e-5
        assert stopping_reason([1e-4] * 40, tol=1e-7, n=2000) is None

    def test_short_history(self):
        assert stopping_reason([6.8e-7] * 19, tol=1e-7, n=2000) is None

    def test_window_zero_disables_the_stall_rule(self):
        numerics = NumericsConfig(amp_stall_window=0)
        assert stopping_reason([6.8e-7] * 40, tol=1e-7, n=2000, numerics=numerics) is None

    def test_run_stops_on_a_stall(self, committee_instance):
        # any flat update counts as stalled with this floor
        numerics = NumericsConfig(amp_floor_scale=1e6, amp_stall_window=4, amp_stall_rtol=0.99)
        _, report = amp_run(committee_instance, tol=1e-14, max_iters=50, numerics=numerics)
        assert report.converged
        assert report.stop_reason == "noise-floor"
        assert 4 <= report.iterations < 50


class TestPrediction:
    """Tests for predictions and the empirical error."""

    def test_uninformed_prediction(self, committee_instance):
        state = init_state(committee_instance)
        state.W_hat[:] = 0.0
        mean, posterior = predict_label(np.ones(100), state, committee_instance.prior, committee_instance.channel, np.zeros((2, 2)))
        assert mean == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(posterior.probabilities, [0.25, 0.5, 0.25])

    def test_prediction_rejects_overlap_above_rho(self, committee_instance):
        state = init_state(committee_instance)
        with pytest.raises(DomainError):
            predict_label(np.ones(100), state, committee_instance.prior, committee_instance.channel, 2.0 * np.eye(2))

    def test_empirical_error_of_zero_estimator(self, committee_instance):
        state = init_state(committee_instance)
        state.W_hat[:] = 0.0
        eps = empirical_gen_error(state, committee_instance, n_test=100_000, q_amp=np.zeros((2, 2)))
        # half the probability that the two teacher units agree in sign
        gram = committee_instance.W_star.T @ committee_instance.W_star / committee_instance.n
        r = gram[0, 1] / np.sqrt(gram[0, 0] * gram[1, 1])
        assert eps == pytest.approx(0.5 * (0.5 + np.arcsin(r) / np.pi), abs=0.005)

    def test_empirical_error_needs_test_samples(self, committee_instance):
        with pytest.raises(DomainError):
            empirical_gen_error(init_state(committee_instance), committee_instance, n_test=10)

    def test_run_reports_empirical_error(self, committee_instance):
        _, report = amp_run(committee_instance, max_iters=20, n_test=5000)
        assert 0.0 <= report.gen_error_empirical <= 1.0
        assert 0.0 <= report.gen_error_closed <= 0.25 + 1e-9


@pytest.mark.slow
class TestTracksStateEvolution:
    """AMP on n = 2000 committee instances against the state evolution fixed point."""

    SEEDS = (1, 2, 3)

    @pytest.fixture(scope="class")
    def gaussian_committee(self):
        return PriorModel.gaussian(2), ChannelModel.committee(2)

    @pytest.mark.parametrize("alpha", [1.5, 3.0])
    def test_overlap_and_error(self, gaussian_committee, alpha):
        prior, ch = gaussian_committee
        se = run_from(InitKind.UNINFORMED, alpha, prior, ch)
        reports = []
        for seed in self.SEEDS:
            inst = generate_instance(2000, alpha, prior, ch, seed=seed)
            _, report = amp_run(inst, n_test=20_000)
            reports.append(report)

        assert all(r.converged for r in reports)
        assert all(r.iterations < DEFAULT_NUMERICS.amp_max_iters for r in reports)
        assert np.mean([r.q00 for r in reports]) == pytest.approx(se.q00, abs=0.05)
        assert np.mean([r.q01 for r in reports]) == pytest.approx(se.q01, abs=0.05)
        assert np.mean([r.gen_error_empirical for r in reports]) == pytest.approx(se.gen_error, abs=0.02)

    def test_non_specialized_run_stops_at_the_noise_floor(self, gaussian_committee):
        prior, ch = gaussian_committee
        inst = generate_instance(2000, 1.5, prior, ch, seed=1)
        _, report = amp_run(inst)
        assert report.converged
        assert report.iterations < DEFAULT_NUMERICS.amp_max_iters // 2

    def test_memory_term_is_needed(self, gaussian_committee):
        prior, ch = gaussian_committee
        se = run_from(InitKind.UNINFORMED, 1.5, prior, ch)
        inst = generate_instance(2000, 1.5, prior, ch, seed=1)
        try:
            _, report = amp_run(inst, onsager=False, max_iters=200)
        except NumericalError:
            return
        assert abs(report.q00 - se.q00) > 0.1
