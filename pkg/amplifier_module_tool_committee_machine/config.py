"""
Configuration management for the committee machine analysis.
"""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import ConfigError
from .models import (
    AmpInit,
    ChannelKind,
    ChannelModel,
    InitKind,
    Mode,
    PriorKind,
    PriorModel,
    TransitionKind,
)


@dataclass
class NumericsConfig:
    """
    Tolerances and node counts shared by the numerical kernels.

    Attributes:
        gh_nodes: Gauss-Hermite nodes per dimension
        radial_nodes: Gauss-Laguerre nodes of the sign-aware quadrature
        angular_step: tanh-sinh step of the angular rule
        angular_span: tanh-sinh truncation |t| <= span
        mc_samples: Samples per Monte Carlo evaluation
        mc_seed: Seed of the common random numbers used by MC kernels
        psd_tol: Most negative eigenvalue accepted as PSD
        eig_floor: Eigenvalue floor applied when repairing covariances
        zero_mass: Orthant mass below which an outcome is impossible
        z_floor: Label likelihood below which SE quadrature drops a node
        se_tol: State evolution residual tolerance (Frobenius)
        se_max_iters: State evolution iteration cap
        specialization_floor: Minimal q_d reported as specialized
        perfect_tol: 1 - q00 threshold of the perfect branch
        tie_tol: Free entropies closer than this are degenerate
        amp_tol: AMP tolerance on the mean per-variable update
        amp_max_iters: AMP iteration cap
        damping: AMP damping eta in [0, 1)
        amp_floor_scale: AMP also stops once the update sits below amp_floor_scale / sqrt(n) and stalls
        amp_stall_window: Number of recent updates inspected for a stall (0 disables it)
        amp_stall_rtol: Largest relative change between the half-window means of a stalled update
        amp_cache_bytes: Largest X whose elementwise square AMP keeps in memory
        alpha_tol: Bisection tolerance on alpha
        grid_step: Multi-start spacing in q_d (large K)
        merge_tol: Distance under which large-K fixed points are merged
        rademacher_max_k: Largest K handled by exact enumeration
    """
    gh_nodes: int = 40
    radial_nodes: int = 40
    angular_step: float = 0.125
    angular_span: float = 3.0
    mc_samples: int = 100_000
    mc_seed: int = 0
    psd_tol: float = 1e-8
    eig_floor: float = 1e-12
    zero_mass: float = 1e-300
    z_floor: float = 1e-14
    se_tol: float = 1e-10
    se_max_iters: int = 10_000
    specialization_floor: float = 1e-5
    perfect_tol: float = 1e-4
    tie_tol: float = 1e-9
    amp_tol: float = 1e-7
    amp_max_iters: int = 1000
    damping: float = 0.0
    amp_floor_scale: float = 1e-3
    amp_stall_window: int = 20
    amp_stall_rtol: float = 0.05
    amp_cache_bytes: int = 1 << 30
    alpha_tol: float = 1e-3
    grid_step: float = 0.05
    merge_tol: float = 1e-6
    rademacher_max_k: int = 16

    def replace(self, **changes: Any) -> "NumericsConfig":
        data = asdict(self)
        data.update(changes)
        return NumericsConfig(**data)

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "NumericsConfig":
        """Create from dictionary, ignoring unknown keys."""
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


DEFAULT_NUMERICS = NumericsConfig()


@dataclass
class SweepConfig:
    """
    One batch run of the driver.

    Attributes:
        mode: se, amp, largek, transition or generror
        channel: committee, parity or linear
        prior: gaussian or rademacher
        k: Number of hidden units
        noise: Output noise (linear channel only)
        alpha_min, alpha_max, alpha_steps: Linear alpha grid (alpha / K in largek mode)
        alphas: Explicit grid, overrides the linear one when given
        n: AMP input dimension
        seeds: AMP instance seeds
        init: uninformed, informed or both
        transition: Transition kind for transition mode
        damping: AMP damping
        mc_samples: Monte Carlo sample count
        n_test: AMP test samples for the empirical error
        numerics: Tolerances
        workers: Worker processes (1 runs inline)
        out: Output file path
        format: csv or jsonl
        timing: Record wall_time_ms (makes files non-reproducible)
        save_instances: Store the descriptor of every AMP instance next to the results
    """
    mode: Mode = Mode.SE
    channel: ChannelKind = ChannelKind.COMMITTEE
    prior: PriorKind = PriorKind.GAUSSIAN
    k: int = 2
    noise: float = 0.0
    alpha_min: float = 0.5
    alpha_max: float = 4.0
    alpha_steps: int = 71
    alphas: Optional[list[float]] = None
    n: int = 1000
    seeds: list[int] = field(default_factory=lambda: [1])
    init: str = "both"
    transition: TransitionKind = TransitionKind.SPEC
    damping: float = 0.0
    mc_samples: int = 100_000
    n_test: int = 100_000
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    workers: int = 1
    out: Optional[str] = None
    format: str = "csv"
    timing: bool = False
    save_instances: bool = False

    def alpha_grid(self) -> np.ndarray:
        """Alpha values in increasing order."""
        if self.alphas is not None:
            return np.asarray(self.alphas, dtype=float)
        if self.alpha_steps <= 0:
            return np.empty(0)
        if self.alpha_steps == 1:
            return np.array([float(self.alpha_min)])
        return np.linspace(self.alpha_min, self.alpha_max, int(self.alpha_steps))

    def prior_model(self) -> PriorModel:
        return PriorModel(self.prior, self.k)

    def channel_model(self) -> ChannelModel:
        return ChannelModel(self.channel, self.k, self.noise)

    def effective_numerics(self) -> NumericsConfig:
        """Numerics with the top-level damping / sample count folded in."""
        return self.numerics.replace(damping=self.damping, mc_samples=self.mc_samples)

    def se_inits(self) -> list[InitKind]:
        if self.init == "both":
            return [InitKind.UNINFORMED, InitKind.INFORMED]
        return [InitKind(self.init)]

    def amp_init(self) -> AmpInit:
        return AmpInit.INFORMED if self.init == "informed" else AmpInit.RANDOM

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "mode": self.mode.value,
            "channel": self.channel.value,
            "prior": self.prior.value,
            "k": self.k,
            "noise": self.noise,
            "alpha_min": self.alpha_min,
            "alpha_max": self.alpha_max,
            "alpha_steps": self.alpha_steps,
            "alphas": self.alphas,
            "n": self.n,
            "seeds": list(self.seeds),
            "init": self.init,
            "transition": self.transition.value,
            "damping": self.damping,
            "mc_samples": self.mc_samples,
            "n_test": self.n_test,
            "numerics": self.numerics.to_dict(),
            "workers": self.workers,
            "out": self.out,
            "format": self.format,
            "timing": self.timing,
            "save_instances": self.save_instances,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        """Create from dictionary; enum fields accept their string values."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}", field=unknown[0])
        values = dict(data)
        enum_fields = {
            "mode": Mode,
            "channel": ChannelKind,
            "prior": PriorKind,
            "transition": TransitionKind,
        }
        for name, enum_cls in enum_fields.items():
            if name in values and not isinstance(values[name], enum_cls):
                try:
                    values[name] = enum_cls(str(values[name]).lower())
                except ValueError:
                    raise ConfigError(f"invalid value '{values[name]}' for {name}", field=name) from None
        if "numerics" in values and isinstance(values["numerics"], dict):
            values["numerics"] = NumericsConfig.from_dict(values["numerics"])
        return cls(**values)


def validate(config: SweepConfig) -> list[str]:
    """
    Check that a sweep is runnable.

    Returns:
        Diagnostics, each naming the offending field; empty iff runnable
    """
    diagnostics: list[str] = []

    if config.k < 1:
        diagnostics.append(f"k: must be >= 1, got {config.k}")
    if config.channel is ChannelKind.PARITY and config.k != 2:
        diagnostics.append("k: parity requires K=2")
    if config.channel is ChannelKind.LINEAR and config.noise <= 0:
        diagnostics.append("noise: linear channel requires noise > 0")
    if config.channel is not ChannelKind.LINEAR and config.noise != 0:
        diagnostics.append("noise: only the linear channel accepts noise")
    if config.prior is PriorKind.RADEMACHER and config.k > config.numerics.rademacher_max_k:
        diagnostics.append(f"k: Rademacher enumeration is capped at K={config.numerics.rademacher_max_k}")

    grid = config.alpha_grid()
    if config.mode is not Mode.TRANSITION:
        if grid.size == 0:
            diagnostics.append("alpha: grid is empty")
        elif np.any(np.diff(grid) <= 0):
            diagnostics.append("alpha: grid must be strictly increasing")
        if grid.size and np.any(grid < 0):
            diagnostics.append("alpha: values must be nonnegative")
    else:
        if not config.alpha_min < config.alpha_max:
            diagnostics.append("alpha_min: transition bracket needs alpha_min < alpha_max")
        if config.alpha_min < 0:
            diagnostics.append("alpha_min: must be nonnegative")

    if config.mode is Mode.AMP:
        if not config.seeds:
            diagnostics.append("seeds: amp mode needs at least one seed")
        if config.n < 10:
            diagnostics.append(f"n: must be >= 10, got {config.n}")
        if config.n_test < 1000:
            diagnostics.append(f"n_test: must be >= 1000, got {config.n_test}")
    if config.mode is Mode.LARGEK:
        if config.channel is not ChannelKind.COMMITTEE or config.prior is not PriorKind.GAUSSIAN:
            diagnostics.append("channel: largek mode covers the Gaussian committee machine only")
        if grid.size and np.any(grid <= 0):
            diagnostics.append("alpha: largek grid must be positive")
    if config.mode is Mode.GENERROR and config.k != 2:
        diagnostics.append("k: generror mode evaluates the K=2 committee integral")

    if config.init not in ("uninformed", "informed", "both", "symmetric"):
        diagnostics.append(f"init: unknown initialization '{config.init}'")
    if not 0.0 <= config.damping < 1.0:
        diagnostics.append("damping: must lie in [0, 1)")
    if config.mc_samples < 1:
        diagnostics.append("mc_samples: must be positive")
    if config.workers < 1:
        diagnostics.append("workers: must be positive")
    if config.format not in ("csv", "jsonl"):
        diagnostics.append(f"format: expected csv or jsonl, got '{config.format}'")

    numerics = config.numerics
    if not 2 <= numerics.gh_nodes <= 200:
        diagnostics.append("numerics.gh_nodes: must lie in [2, 200]")
    if numerics.se_tol <= 0 or numerics.amp_tol <= 0 or numerics.alpha_tol <= 0:
        diagnostics.append("numerics: tolerances must be positive")
    if numerics.amp_stall_window < 0 or not 0.0 <= numerics.amp_stall_rtol < 1.0:
        diagnostics.append("numerics.amp_stall_window: window must be >= 0 and amp_stall_rtol in [0, 1)")

    return diagnostics


def ensure_valid(config: SweepConfig) -> SweepConfig:
    """Raise ConfigError carrying every diagnostic if the config is not runnable."""
    diagnostics = validate(config)
    if diagnostics:
        field_name = diagnostics[0].split(":", 1)[0]
        raise ConfigError("; ".join(diagnostics), field=field_name, diagnostics=diagnostics)
    return config


class ConfigManager:
    """
    Manages loading and saving sweep configurations.

    Example:
        manager = ConfigManager("./data")
        config = manager.load()
        config.alpha_max = 3.0
        manager.save(config)
    """

    def __init__(self, config_dir: str | Path = "./data"):
        """
        Initialize configuration manager.

        Args:
            config_dir: Directory to store the configuration file
        """
        self.config_dir = Path(config_dir)
        self.config_dir.mkdir(parents=True, exist_ok=True)
        self._config_file = self.config_dir / "sweep.json"

    def load(self) -> SweepConfig:
        """Load configuration from disk. Returns default config if file doesn't exist."""
        if not self._config_file.exists():
            return SweepConfig()
        return self.load_file(self._config_file)

    def save(self, config: SweepConfig) -> None:
        """Save configuration to disk."""
        with open(self._config_file, "w", encoding="utf-8") as f:
            json.dump(config.to_dict(), f, indent=2)

    def config_exists(self) -> bool:
        """Check if configuration file exists."""
        return self._config_file.exists()

    @staticmethod
    def load_file(path: str | Path) -> SweepConfig:
        """Read an explicit JSON config file."""
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}", field="config") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}", field="config") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object", field="config")
        return SweepConfig.from_dict(data)
