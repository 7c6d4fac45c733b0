"""State Evolution Tool."""

from typing import Any

from .base import MODEL_PROPERTIES, CommitteeMachineBaseTool, ToolResult, json_safe


class StateEvolutionTool(CommitteeMachineBaseTool):
    """Tool for computing state evolution fixed points over a grid of alpha."""

    @property
    def name(self) -> str:
        return "committee_state_evolution"

    @property
    def description(self) -> str:
        return (
            "Run the Bayes-optimal state evolution of a committee machine at the given sample ratios "
            "and report the fixed points (overlaps, free entropy, generalization error, branch)."
        )

    @property
    def input_schema(self) -> dict[str, Any]:
        return {
            "type": "object",
            "properties": {
                **MODEL_PROPERTIES,
                "alphas": {
                    "type": "array",
                    "items": {"type": "number"},
                    "description": "Sample ratios alpha = m/n, strictly increasing",
                },
                "init": {
                    "type": "string",
                    "enum": ["uninformed", "informed", "both", "symmetric"],
                    "description": "Initialization(s) of the iteration",
                    "default": "both",
                },
                "save": {
                    "type": "boolean",
                    "description": "Write the rows to a result file in the data directory",
                    "default": False,
                },
            },
            "required": ["alphas"],
        }

    async def execute(self, input_data: dict[str, Any]) -> ToolResult:
        """Execute the state evolution tool."""
        try:
            config = self.manager.sweep_config(
                mode="se",
                alphas=[float(a) for a in input_data["alphas"]],
                init=input_data.get("init", "both"),
                **self.model_fields(input_data),
            )
            result = await self.manager.run_sweep(config, save=bool(input_data.get("save", False)))

            return ToolResult(
                success=True,
                output=json_safe({
                    "rows": [row.to_dict() for row in result.rows],
                    "summary": result.summary,
                    "path": str(result.path) if result.path else None,
                }),
            )

        except Exception as e:
            return ToolResult(
                success=False,
                error={
                    "message": f"Failed to run state evolution: {str(e)}"
                }
            )
