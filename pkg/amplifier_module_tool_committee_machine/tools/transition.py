"""Transition Tool."""

from typing import Any

from .base import MODEL_PROPERTIES, CommitteeMachineBaseTool, ToolResult
from ..models import TransitionKind
from ..state_evolution import find_transition


class TransitionTool(CommitteeMachineBaseTool):
    """Tool for locating a phase transition in alpha by bisection."""

    @property
    def name(self) -> str:
        return "committee_transition"

    @property
    def description(self) -> str:
        return (
            "Locate a transition of the committee machine learning curve: specialization (spec), "
            "appearance of the specialized branch (spinodal), information-theoretic (it) or perfect learning (perf)."
        )

    @property
    def input_schema(self) -> dict[str, Any]:
        return {
            "type": "object",
            "properties": {
                **MODEL_PROPERTIES,
                "kind": {
                    "type": "string",
                    "enum": ["spec", "spinodal", "it", "perf"],
                    "description": "Which transition to locate",
                },
                "alpha_lo": {"type": "number", "description": "Lower end of the bracket"},
                "alpha_hi": {"type": "number", "description": "Upper end of the bracket"},
                "tol": {"type": "number", "description": "Bisection tolerance on alpha"},
            },
            "required": ["kind", "alpha_lo", "alpha_hi"],
        }

    async def execute(self, input_data: dict[str, Any]) -> ToolResult:
        """Execute the transition tool."""
        try:
            kind = TransitionKind(input_data["kind"].lower())
            config = self.manager.sweep_config(mode="transition", transition=kind.value, **self.model_fields(input_data))
            tol = input_data.get("tol")
            alpha = await self.manager.run_in_thread(
                find_transition,
                kind,
                float(input_data["alpha_lo"]),
                float(input_data["alpha_hi"]),
                config.prior_model(),
                config.channel_model(),
                float(tol) if tol is not None else None,
                self.manager.numerics,
            )

            return ToolResult(
                success=True,
                output={
                    "kind": kind.value,
                    "alpha": alpha,
                    "tolerance": float(tol) if tol is not None else self.manager.numerics.alpha_tol,
                    "message": f"{kind.value} transition at alpha = {alpha:.4f}",
                },
            )

        except Exception as e:
            return ToolResult(
                success=False,
                error={
                    "message": f"Failed to locate transition: {str(e)}"
                }
            )
