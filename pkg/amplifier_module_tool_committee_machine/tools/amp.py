"""AMP Experiment Tool."""

from typing import Any

from .base import MODEL_PROPERTIES, CommitteeMachineBaseTool, ToolResult, json_safe


class AmpExperimentTool(CommitteeMachineBaseTool):
    """Tool for running AMP on generated teacher instances."""

    @property
    def name(self) -> str:
        return "committee_amp"

    @property
    def description(self) -> str:
        return (
            "Generate teacher-student instances of size n and run approximate message passing; "
            "reports per-seed overlaps and generalization errors plus their mean and standard error."
        )

    @property
    def input_schema(self) -> dict[str, Any]:
        return {
            "type": "object",
            "properties": {
                **MODEL_PROPERTIES,
                "alpha": {"type": "number", "description": "Sample ratio alpha = m/n"},
                "n": {"type": "integer", "description": "Input dimension", "default": 1000},
                "seeds": {
                    "type": "array",
                    "items": {"type": "integer"},
                    "description": "Instance seeds",
                    "default": [1],
                },
                "init": {
                    "type": "string",
                    "enum": ["uninformed", "informed"],
                    "description": "Random start or start at the teacher",
                    "default": "uninformed",
                },
                "damping": {"type": "number", "description": "Damping in [0, 1)", "default": 0.0},
                "n_test": {"type": "integer", "description": "Test samples", "default": 100000},
                "save": {"type": "boolean", "default": False},
            },
            "required": ["alpha"],
        }

    async def execute(self, input_data: dict[str, Any]) -> ToolResult:
        """Execute the AMP experiment tool."""
        try:
            config = self.manager.sweep_config(
                mode="amp",
                alphas=[float(input_data["alpha"])],
                n=int(input_data.get("n", 1000)),
                seeds=[int(s) for s in input_data.get("seeds", [1])],
                init=input_data.get("init", "uninformed"),
                damping=float(input_data.get("damping", 0.0)),
                n_test=int(input_data.get("n_test", 100_000)),
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
                    "message": f"Failed to run AMP: {str(e)}"
                }
            )
