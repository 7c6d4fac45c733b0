"""Large-K Analysis Tool."""

from typing import Any

from .base import CommitteeMachineBaseTool, ToolResult, json_safe
from ..large_k import iterate_scaled, large_k_transition, plateau_error, solve_scaled, solve_unscaled
from ..models import LargeKBranch, TransitionKind


def _branch_output(branch: LargeKBranch) -> dict[str, Any]:
    return {
        "alpha_tilde": branch.alpha_tilde,
        "q_d": branch.point.q_d,
        "q_a": branch.point.q_a,
        "chi": branch.point.chi,
        "free_entropy": branch.free_entropy,
        "gen_error": branch.gen_error,
        "label": branch.label.value,
        "stable": branch.stable,
        "dominant": branch.dominant,
        "converged": branch.converged,
    }


class LargeKTool(CommitteeMachineBaseTool):
    """Tool for the committee machine with many hidden units."""

    @property
    def name(self) -> str:
        return "committee_large_k"

    @property
    def description(self) -> str:
        return (
            "Analyze the Gaussian committee machine as K grows: fixed point branches at alpha = alpha_tilde K, "
            "the non-specialized solution at alpha of order one, the scaled iteration from an uninformed start, "
            "the spinodal and specialization transitions, and the plateau error."
        )

    @property
    def input_schema(self) -> dict[str, Any]:
        return {
            "type": "object",
            "properties": {
                "action": {
                    "type": "string",
                    "enum": ["branches", "unscaled", "iterate", "transition", "plateau"],
                    "description": "What to compute",
                    "default": "branches",
                },
                "alphas": {
                    "type": "array",
                    "items": {"type": "number"},
                    "description": "alpha_tilde = alpha/K values (alpha itself for 'unscaled')",
                },
                "kind": {
                    "type": "string",
                    "enum": ["spinodal", "spec"],
                    "description": "Transition to locate (action 'transition')",
                    "default": "spec",
                },
                "q_d0": {"type": "number", "description": "Start of the scaled iteration", "default": 0.001},
            },
            "required": [],
        }

    async def execute(self, input_data: dict[str, Any]) -> ToolResult:
        """Execute the large-K tool."""
        try:
            action = input_data.get("action", "branches")
            numerics = self.manager.numerics
            alphas = [float(a) for a in input_data.get("alphas", [])]

            if action == "plateau":
                output: dict[str, Any] = {"plateau_error": plateau_error()}
            elif action == "transition":
                kind = TransitionKind(input_data.get("kind", "spec"))
                alpha = await self.manager.run_in_thread(large_k_transition, kind, numerics=numerics)
                output = {"kind": kind.value, "alpha_tilde": alpha}
            elif action == "unscaled":
                branches = [await self.manager.run_in_thread(solve_unscaled, a, numerics) for a in alphas]
                output = {"branches": [_branch_output(b) for b in branches]}
            elif action == "iterate":
                q_d0 = float(input_data.get("q_d0", 1e-3))
                branches = [await self.manager.run_in_thread(iterate_scaled, a, q_d0, numerics=numerics) for a in alphas]
                output = {"branches": [_branch_output(b) for b in branches]}
            elif action == "branches":
                found = []
                for a in alphas:
                    found.extend(await self.manager.run_in_thread(solve_scaled, a, numerics))
                output = {"branches": [_branch_output(b) for b in found]}
            else:
                raise ValueError(f"unknown action '{action}'")

            return ToolResult(success=True, output=json_safe(output))

        except Exception as e:
            return ToolResult(
                success=False,
                error={
                    "message": f"Failed to run large-K analysis: {str(e)}"
                }
            )
