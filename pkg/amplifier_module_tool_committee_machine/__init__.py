"""
Amplifier Committee Machine - Bayes-optimal learning in two-layer networks.

This module computes learning curves, phase transitions and message passing
experiments for committee machines in the teacher-student setting, and
exposes them as Amplifier tools.
"""

import logging
from typing import Any

try:
    from amplifier_core import ModuleCoordinator
except ImportError:
    ModuleCoordinator = None

from .errors import (
    CommitteeMachineError,
    ConfigError,
    NumericalError,
    BracketError,
    DomainError,
)
from .models import (
    PriorKind,
    ChannelKind,
    Branch,
    InitKind,
    AmpInit,
    TransitionKind,
    Mode,
    PriorModel,
    ChannelModel,
    CommitteeOverlap,
    OverlapPair,
    SeFixedPoint,
    LargeKBranch,
    InstanceSpec,
    TeacherInstance,
    RunReport,
    ResultRow,
)
from .config import (
    NumericsConfig,
    SweepConfig,
    ConfigManager,
    validate,
)
from .state_evolution import (
    se_step,
    se_run,
    se_sweep,
    free_entropy,
    find_transition,
    gen_error_k2,
    gibbs_vs_bayes_check,
)
from .large_k import (
    i_c_large_k,
    solve_unscaled,
    solve_scaled,
    gen_error_large_k,
    stability_nonspecialized,
)
from .amp import (
    generate_instance,
    amp_step,
    amp_run,
    measure_overlap,
    predict_label,
    empirical_gen_error,
)
from .storage import ResultStorage
from .runner import SweepResult, run_sweep
from .manager import CommitteeMachineManager
from .tools import (
    StateEvolutionTool,
    TransitionTool,
    AmpExperimentTool,
    LargeKTool,
)

__version__ = "1.0.0"

logger = logging.getLogger(__name__)


async def mount(coordinator: "ModuleCoordinator", config: dict[str, Any] | None = None):
    """
    Mount the Committee Machine module with Amplifier.

    This function is the entry point called by Amplifier to initialize and
    register the committee machine tools.

    Args:
        coordinator: The ModuleCoordinator instance for registering capabilities
        config: Optional configuration dictionary (data_dir, numerics, workers)

    Returns:
        Async cleanup function to be called when the module is unmounted
    """
    config = config or {}

    logger.info("Mounting Committee Machine module...")

    try:
        manager = CommitteeMachineManager(config)
        await manager.start()

        tools = [
            StateEvolutionTool(manager),
            TransitionTool(manager),
            AmpExperimentTool(manager),
            LargeKTool(manager),
        ]

        for tool in tools:
            await coordinator.mount("tools", tool, name=tool.name)
            logger.debug(f"Mounted Committee Machine tool: {tool.name}")

        logger.info(f"Committee Machine module mounted successfully with {len(tools)} tools")

        async def cleanup():
            logger.info("Cleaning up Committee Machine module...")
            await manager.stop()

        return cleanup

    except Exception as e:
        logger.error(f"Failed to mount Committee Machine module: {e}")
        return None


__all__ = [
    "mount",
    # Errors
    "CommitteeMachineError",
    "ConfigError",
    "NumericalError",
    "BracketError",
    "DomainError",
    # Models
    "PriorKind",
    "ChannelKind",
    "Branch",
    "InitKind",
    "AmpInit",
    "TransitionKind",
    "Mode",
    "PriorModel",
    "ChannelModel",
    "CommitteeOverlap",
    "OverlapPair",
    "SeFixedPoint",
    "LargeKBranch",
    "InstanceSpec",
    "TeacherInstance",
    "RunReport",
    "ResultRow",
    # Configuration
    "NumericsConfig",
    "SweepConfig",
    "ConfigManager",
    "validate",
    # State evolution
    "se_step",
    "se_run",
    "se_sweep",
    "free_entropy",
    "find_transition",
    "gen_error_k2",
    "gibbs_vs_bayes_check",
    # Large K
    "i_c_large_k",
    "solve_unscaled",
    "solve_scaled",
    "gen_error_large_k",
    "stability_nonspecialized",
    # AMP
    "generate_instance",
    "amp_step",
    "amp_run",
    "measure_overlap",
    "predict_label",
    "empirical_gen_error",
    # Storage and execution
    "ResultStorage",
    "SweepResult",
    "run_sweep",
    # Manager
    "CommitteeMachineManager",
    # Tools
    "StateEvolutionTool",
    "TransitionTool",
    "AmpExperimentTool",
    "LargeKTool",
]
