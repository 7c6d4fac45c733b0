"""Tests for configuration and models."""

import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

from amplifier_module_tool_committee_machine import (
    ChannelKind,
    ChannelModel,
    CommitteeOverlap,
    ConfigError,
    ConfigManager,
    InstanceSpec,
    Mode,
    NumericsConfig,
    PriorKind,
    PriorModel,
    ResultRow,
    SweepConfig,
    TransitionKind,
    validate,
)
from amplifier_module_tool_committee_machine.config import ensure_valid
from amplifier_module_tool_committee_machine.models import RESULT_COLUMNS, InitKind


class TestPriorModel:
    """Tests for PriorModel."""

    def test_defaults_to_identity(self):
        prior = PriorModel.gaussian(3)
        np.testing.assert_array_equal(prior.rho, np.eye(3))

    def test_rho_is_read_only(self):
        prior = PriorModel.gaussian(2)
        with pytest.raises(ValueError):
            prior.rho[0, 0] = 2.0

    def test_accepts_string_kind(self):
        assert PriorModel("rademacher", 2).kind is PriorKind.RADEMACHER

    def test_rejects_unknown_kind(self):
        with pytest.raises(ConfigError):
            PriorModel("laplace", 2)

    def test_rejects_indefinite_rho(self):
        with pytest.raises(ConfigError) as excinfo:
            PriorModel.gaussian(2, rho=[[1.0, 2.0], [2.0, 1.0]])
        assert excinfo.value.field == "rho"

    def test_rademacher_rho_is_fixed(self):
        with pytest.raises(ConfigError):
            PriorModel(PriorKind.RADEMACHER, 2, rho=2 * np.eye(2))

    def test_round_trip(self):
        prior = PriorModel.gaussian(2, rho=[[1.0, 0.3], [0.3, 2.0]])
        again = PriorModel.from_dict(json.loads(json.dumps(prior.to_dict())))
        np.testing.assert_array_equal(again.rho, prior.rho)


class TestChannelModel:
    """Tests for ChannelModel."""

    def test_parity_needs_two_units(self):
        with pytest.raises(ConfigError) as excinfo:
            ChannelModel(ChannelKind.PARITY, 3)
        assert "parity requires K=2" in str(excinfo.value)

    def test_linear_needs_noise(self):
        with pytest.raises(ConfigError):
            ChannelModel(ChannelKind.LINEAR, 2)

    def test_noise_only_on_linear(self):
        with pytest.raises(ConfigError):
            ChannelModel(ChannelKind.COMMITTEE, 2, noise=0.1)

    @pytest.mark.parametrize("K,labels", [(1, (-1, 1)), (2, (-1, 0, 1)), (3, (-1, 1)), (4, (-1, 0, 1))])
    def test_committee_labels(self, K, labels):
        assert ChannelModel.committee(K).labels == labels

    def test_linear_has_no_labels(self):
        ch = ChannelModel.linear(2, 0.5)
        assert ch.labels == ()
        assert not ch.is_discrete


class TestOverlaps:
    """Tests for the committee-symmetric parametrization."""

    def test_matrix_round_trip(self):
        overlap = CommitteeOverlap(q_d=0.3, q_a=0.4)
        again = CommitteeOverlap.from_matrix(overlap.to_matrix(4))
        assert again.q_d == pytest.approx(0.3)
        assert again.q_a == pytest.approx(0.4)

    def test_validity(self):
        assert CommitteeOverlap(0.5, 0.5).is_valid()
        assert not CommitteeOverlap(0.8, 0.5).is_valid()
        assert not CommitteeOverlap(-0.1, 0.0).is_valid()

    def test_instance_spec_alpha(self):
        spec = InstanceSpec(n=100, m=250, seed=1, prior=PriorModel.gaussian(2), channel=ChannelModel.committee(2))
        assert spec.alpha == 2.5
        assert spec.K == 2

    def test_result_row_column_order(self):
        row = ResultRow(mode="se", alpha=1.0)
        assert tuple(row.to_dict()) == RESULT_COLUMNS


class TestNumericsConfig:
    """Tests for NumericsConfig."""

    def test_unknown_keys_ignored(self):
        numerics = NumericsConfig.from_dict({"gh_nodes": 20, "not_a_field": 1})
        assert numerics.gh_nodes == 20

    def test_replace(self):
        numerics = NumericsConfig().replace(se_tol=1e-6)
        assert numerics.se_tol == 1e-6
        assert NumericsConfig().se_tol == 1e-10


class TestSweepConfig:
    """Tests for SweepConfig parsing and validation."""

    def test_defaults_validate(self):
        assert validate(SweepConfig()) == []

    def test_from_dict_parses_enums(self):
        config = SweepConfig.from_dict({"mode": "AMP", "prior": "rademacher", "transition": "perf"})
        assert config.mode is Mode.AMP
        assert config.prior is PriorKind.RADEMACHER
        assert config.transition is TransitionKind.PERF

    def test_from_dict_rejects_unknown_field(self):
        with pytest.raises(ConfigError) as excinfo:
            SweepConfig.from_dict({"alpha_maxx": 3.0})
        assert excinfo.value.field == "alpha_maxx"

    def test_from_dict_rejects_bad_enum(self):
        with pytest.raises(ConfigError) as excinfo:
            SweepConfig.from_dict({"channel": "relu"})
        assert excinfo.value.field == "channel"

    def test_alpha_grid(self):
        config = SweepConfig(alpha_min=1.0, alpha_max=2.0, alpha_steps=5)
        np.testing.assert_allclose(config.alpha_grid(), [1.0, 1.25, 1.5, 1.75, 2.0])

    def test_explicit_grid_wins(self):
        config = SweepConfig(alphas=[0.5, 3.0])
        np.testing.assert_array_equal(config.alpha_grid(), [0.5, 3.0])

    def test_parity_with_three_units(self):
        diagnostics = validate(SweepConfig(channel=ChannelKind.PARITY, k=3))
        assert "k: parity requires K=2" in diagnostics

    def test_empty_grid(self):
        assert "alpha: grid is empty" in validate(SweepConfig(alpha_steps=0))

    def test_decreasing_grid(self):
        assert "alpha: grid must be strictly increasing" in validate(SweepConfig(alphas=[2.0, 1.0]))

    def test_transition_bracket(self):
        config = SweepConfig(mode=Mode.TRANSITION, alpha_min=3.0, alpha_max=1.0)
        assert any(d.startswith("alpha_min:") for d in validate(config))

    def test_largek_needs_gaussian_committee(self):
        config = SweepConfig(mode=Mode.LARGEK, prior=PriorKind.RADEMACHER, alphas=[5.0])
        assert any(d.startswith("channel:") for d in validate(config))

    def test_amp_sizes(self):
        diagnostics = validate(SweepConfig(mode=Mode.AMP, n=5, n_test=10, seeds=[]))
        fields = {d.split(":", 1)[0] for d in diagnostics}
        assert {"n", "n_test", "seeds"} <= fields

    def test_every_problem_is_reported(self):
        config = SweepConfig(channel=ChannelKind.PARITY, k=3, damping=1.5, format="xml")
        with pytest.raises(ConfigError) as excinfo:
            ensure_valid(config)
        assert len(excinfo.value.diagnostics) == 3
        assert excinfo.value.field == "k"

    def test_init_choices(self):
        assert SweepConfig(init="both").se_inits() == [InitKind.UNINFORMED, InitKind.INFORMED]
        assert SweepConfig(init="symmetric").se_inits() == [InitKind.SYMMETRIC]
        assert "init: unknown initialization 'random'" in validate(SweepConfig(init="random"))

    @pytest.mark.parametrize("window,rtol", [(-1, 0.05), (20, 1.0), (20, -0.1)])
    def test_stall_settings(self, window, rtol):
        config = SweepConfig(numerics=NumericsConfig(amp_stall_window=window, amp_stall_rtol=rtol))
        assert any(d.startswith("numerics.amp_stall_window:") for d in validate(config))

    def test_stall_check_can_be_disabled(self):
        assert validate(SweepConfig(numerics=NumericsConfig(amp_stall_window=0))) == []


class TestConfigManager:
    """Tests for ConfigManager."""

    def test_load_default_when_missing(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            manager = ConfigManager(tmpdir)
            assert not manager.config_exists()
            assert manager.load().mode is Mode.SE

    def test_save_and_load(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            manager = ConfigManager(tmpdir)
            config = SweepConfig(mode=Mode.AMP, k=3, seeds=[1, 2, 3], numerics=NumericsConfig(gh_nodes=30))
            manager.save(config)
            assert manager.config_exists()
            loaded = manager.load()
            assert loaded.mode is Mode.AMP
            assert loaded.seeds == [1, 2, 3]
            assert loaded.numerics.gh_nodes == 30

    def test_save_instances_round_trip(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            manager = ConfigManager(tmpdir)
            manager.save(SweepConfig(mode=Mode.AMP, save_instances=True, numerics=NumericsConfig(amp_stall_window=8)))
            loaded = manager.load()
            assert loaded.save_instances
            assert loaded.numerics.amp_stall_window == 8
            assert not SweepConfig().save_instances

    def test_invalid_json(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "bad.json"
            path.write_text("{not json")
            with pytest.raises(ConfigError):
                ConfigManager.load_file(path)

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            ConfigManager.load_file("/nonexistent/sweep.json")
