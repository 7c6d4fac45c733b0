"""Tests for the large-K analysis."""

import numpy as np
import pytest

from amplifier_module_tool_committee_machine.config import DEFAULT_NUMERICS
from amplifier_module_tool_committee_machine.errors import DomainError
from amplifier_module_tool_committee_machine.large_k import (
    TWO_OVER_PI,
    _scan_grid,
    dominant_branch,
    gen_error_large_k,
    i_c_derivative,
    i_c_gradient,
    i_c_large_k,
    iterate_scaled,
    large_k_transition,
    plateau_error,
    scaled_residual,
    solve_scaled,
    solve_unscaled,
    stability_nonspecialized,
)
from amplifier_module_tool_committee_machine.models import Branch, TransitionKind

LOG2 = np.log(2.0)


class TestChannelIntegral:
    """Tests for I_C and its derivative."""

    def test_value_at_zero(self):
        assert i_c_large_k(0.0) == pytest.approx(-LOG2, abs=1e-12)

    def test_range_and_monotonicity(self):
        gammas = np.linspace(0.0, 0.999, 40)
        values = np.array([i_c_large_k(g) for g in gammas])
        assert np.all(values >= -LOG2 - 1e-12)
        assert np.all(values <= 0.0)
        assert np.all(np.diff(values) > 0)

    def test_saturated_limit(self):
        assert i_c_large_k(1.0 - 1e-13) == 0.0

    def test_continuous_across_regimes(self):
        assert i_c_large_k(0.5 - 1e-9) == pytest.approx(i_c_large_k(0.5 + 1e-9), abs=1e-8)

    @pytest.mark.parametrize("gamma", [-0.1, 1.0, 1.5])
    def test_domain(self, gamma):
        with pytest.raises(DomainError):
            i_c_large_k(gamma)

    def test_derivative_limit_at_zero(self):
        assert i_c_derivative(0.0) == pytest.approx(1.0 / np.pi)

    @pytest.mark.parametrize("gamma", [0.1, 0.3, 0.7, 0.9])
    def test_derivative_matches_finite_difference(self, gamma):
        step = 1e-6
        numeric = (i_c_large_k(gamma + step) - i_c_large_k(gamma - step)) / (2 * step)
        assert i_c_derivative(gamma) == pytest.approx(numeric, rel=1e-5)

    def test_gradient_chain_rule(self):
        d_qd, d_qa = i_c_gradient(0.0, 0.5)
        assert d_qd == pytest.approx(d_qa)
        assert d_qa == pytest.approx(TWO_OVER_PI * i_c_derivative(TWO_OVER_PI * 0.5))


class TestGeneralizationError:
    """Tests for arccos(gamma)/pi."""

    def test_uninformed(self):
        assert gen_error_large_k(0.0, 0.0) == pytest.approx(0.5)

    def test_perfect(self):
        assert gen_error_large_k(1.0, 0.0) == pytest.approx(0.0, abs=1e-7)

    def test_plateau(self):
        assert plateau_error() == pytest.approx(np.arccos(2 / np.pi) / np.pi)
        assert plateau_error() == pytest.approx(0.28, abs=0.002)

    def test_domain(self):
        with pytest.raises(DomainError):
            gen_error_large_k(1.5, 0.0)


class TestUnscaledRegime:
    """Tests for alpha of order one."""

    def test_zero_alpha(self):
        branch = solve_unscaled(0.0)
        assert branch.point.q_a == 0.0
        assert branch.gen_error == pytest.approx(0.5)
        assert branch.label is Branch.NON_SPECIALIZED

    def test_small_alpha_slope(self):
        """q_a grows like 4 alpha / pi^2 from zero."""
        alpha = 1e-3
        assert solve_unscaled(alpha).point.q_a == pytest.approx(4 * alpha / np.pi**2, rel=1e-2)

    def test_monotone_learning_curve(self):
        branches = [solve_unscaled(a) for a in (0.5, 1.0, 2.0, 5.0, 10.0)]
        assert all(b.converged for b in branches)
        q_a = [b.point.q_a for b in branches]
        errors = [b.gen_error for b in branches]
        assert np.all(np.diff(q_a) > 0)
        assert np.all(np.diff(errors) < 0)

    def test_approaches_plateau(self):
        branch = solve_unscaled(200.0)
        assert branch.point.q_d == 0.0
        assert branch.gen_error == pytest.approx(plateau_error(), abs=0.01)
        assert branch.gen_error > plateau_error()

    def test_negative_alpha(self):
        with pytest.raises(DomainError):
            solve_unscaled(-1.0)


class TestScaledRegime:
    """Tests for alpha = alpha_tilde K."""

    def test_only_plateau_below_spinodal(self):
        branches = solve_scaled(5.0)
        assert len(branches) == 1
        assert branches[0].point.q_d == 0.0
        assert branches[0].dominant
        assert branches[0].gen_error == pytest.approx(plateau_error())

    def test_coexistence(self):
        branches = solve_scaled(7.4, stable_only=True)
        labels = {b.label for b in branches}
        assert labels == {Branch.NON_SPECIALIZED, Branch.SPECIALIZED}
        dominant = [b for b in branches if b.dominant]
        assert len(dominant) == 1
        assert dominant[0].label is Branch.NON_SPECIALIZED

    def test_unstable_root_between_stable_ones(self):
        branches = solve_scaled(7.4)
        specialized = [b for b in branches if b.label is Branch.SPECIALIZED]
        assert len(specialized) == 2
        assert not specialized[0].stable
        assert specialized[1].stable

    def test_roots_are_zeros_of_residual(self):
        for branch in solve_scaled(10.0):
            assert scaled_residual(branch.point.q_d, 10.0) == pytest.approx(0.0, abs=1e-10)

    def test_specialized_error_decays(self):
        best = dominant_branch(20.0)
        assert best.label is Branch.SPECIALIZED
        assert best.gen_error == pytest.approx(1.25 / 20.0, rel=0.15)
        assert best.point.chi > 0

    def test_nonpositive_alpha(self):
        with pytest.raises(DomainError):
            solve_scaled(0.0)

    def test_scan_grid_contains_the_multi_start_points(self):
        grid = _scan_grid(DEFAULT_NUMERICS)
        starts = np.arange(1, 20) * DEFAULT_NUMERICS.grid_step
        assert np.all(np.min(np.abs(grid[None, :] - starts[:, None]), axis=1) < 1e-12)
        assert np.all(np.diff(grid) > 0)
        assert 0.0 < grid[0] <= 1e-5
        assert 1.0 - grid[-1] <= 1e-10

    def test_non_specialized_is_marginal(self):
        assert stability_nonspecialized(10.0) == pytest.approx(0.0, abs=1e-6)

    def test_iteration_falls_back_to_plateau(self):
        branch = iterate_scaled(20.0, q_d0=1e-3)
        assert branch.converged
        assert branch.point.q_d == 0.0
        assert branch.label is Branch.NON_SPECIALIZED

    def test_iteration_from_informed_start(self):
        branch = iterate_scaled(20.0, q_d0=0.99)
        assert branch.label is Branch.SPECIALIZED
        assert branch.point.q_d == pytest.approx(dominant_branch(20.0).point.q_d, abs=1e-8)

    def test_iteration_domain(self):
        with pytest.raises(DomainError):
            iterate_scaled(10.0, q_d0=1.0)

    def test_row_export(self):
        row = solve_scaled(5.0)[0].to_row()
        assert row.mode == "largek"
        assert row.branch == "non-specialized"
        assert row.q_a == pytest.approx(1.0)

    def test_transition_kind_without_large_k_counterpart(self):
        with pytest.raises(DomainError):
            large_k_transition(TransitionKind.IT)


@pytest.mark.slow
class TestLargeKTransitions:
    """Spinodal and free-entropy crossing of the scaled regime."""

    def test_spinodal(self):
        assert large_k_transition(TransitionKind.SPINODAL, 6.9, 7.5, tol=2e-2) == pytest.approx(7.17, abs=0.15)

    def test_specialization(self):
        assert large_k_transition(TransitionKind.SPEC, 7.35, 7.95, tol=2e-2) == pytest.approx(7.65, abs=0.15)
