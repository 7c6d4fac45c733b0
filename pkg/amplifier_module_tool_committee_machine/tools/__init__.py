"""Committee machine tools for Amplifier."""

from .base import CommitteeMachineBaseTool
from .state_evolution import StateEvolutionTool
from .transition import TransitionTool
from .amp import AmpExperimentTool
from .large_k import LargeKTool

__all__ = [
    "CommitteeMachineBaseTool",
    "StateEvolutionTool",
    "TransitionTool",
    "AmpExperimentTool",
    "LargeKTool",
]
