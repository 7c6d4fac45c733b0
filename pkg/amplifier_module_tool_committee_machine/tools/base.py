"""Base class for Committee Machine tools."""

import logging
import math
from typing import Any, TYPE_CHECKING

if TYPE_CHECKING:
    from ..manager import CommitteeMachineManager

try:
    from amplifier_core import ToolResult
except ImportError:
    # Fallback for testing without amplifier-core
    class ToolResult:
        def __init__(self, success: bool, output: dict | None = None, error: dict | None = None):
            self.success = success
            self.output = output or {}
            self.error = error or {}

logger = logging.getLogger(__name__)

# Shared schema fragments
MODEL_PROPERTIES: dict[str, Any] = {
    "prior": {
        "type": "string",
        "enum": ["gaussian", "rademacher"],
        "description": "Teacher weight prior",
        "default": "gaussian",
    },
    "channel": {
        "type": "string",
        "enum": ["committee", "parity", "linear"],
        "description": "Output channel of the network",
        "default": "committee",
    },
    "k": {
        "type": "integer",
        "description": "Number of hidden units",
        "default": 2,
    },
    "noise": {
        "type": "number",
        "description": "Output noise variance (linear channel only)",
        "default": 0.0,
    },
}


def json_safe(value: Any) -> Any:
    """Replace non-finite floats by strings so outputs serialize as JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


class CommitteeMachineBaseTool:
    """Base class for all Committee Machine tools."""

    def __init__(self, manager: "CommitteeMachineManager"):
        """
        Initialize the tool.

        Args:
            manager: The CommitteeMachineManager instance
        """
        self.manager = manager

    @property
    def name(self) -> str:
        """Tool name - must be implemented by subclasses."""
        raise NotImplementedError

    @property
    def description(self) -> str:
        """Tool description - must be implemented by subclasses."""
        raise NotImplementedError

    @property
    def input_schema(self) -> dict[str, Any]:
        """JSON schema for tool input - must be implemented by subclasses."""
        raise NotImplementedError

    async def execute(self, input_data: dict[str, Any]) -> ToolResult:
        """
        Execute the tool.

        Args:
            input_data: Input parameters matching the input_schema

        Returns:
            ToolResult with success status and output/error data
        """
        raise NotImplementedError

    async def __call__(self, input_data: dict[str, Any]) -> ToolResult:
        """Callable interface for the tool."""
        return await self.execute(input_data)

    @staticmethod
    def model_fields(input_data: dict[str, Any]) -> dict[str, Any]:
        """Model selection shared by every tool."""
        return {
            "prior": input_data.get("prior", "gaussian"),
            "channel": input_data.get("channel", "committee"),
            "k": int(input_data.get("k", 2)),
            "noise": float(input_data.get("noise", 0.0)),
        }
