"""
Committee Machine Manager

Holds the storage and numerical defaults shared by the host tools and runs
blocking computations off the event loop.
"""

import asyncio
import logging
from pathlib import Path
from typing import Any, Callable, TypeVar

from .config import NumericsConfig, SweepConfig
from .models import ResultRow
from .runner import SweepResult, run_sweep
from .storage import ResultStorage

logger = logging.getLogger(__name__)

T = TypeVar("T")


def get_committee_data_directory() -> Path:
    """
    Get the data directory for committee machine results.

    Returns:
        Path to ~/.amplifier/committee_machine/ directory
    """
    data_dir = Path.home() / ".amplifier" / "committee_machine"
    data_dir.mkdir(parents=True, exist_ok=True)
    return data_dir


class CommitteeMachineManager:
    """Manages storage, numerical defaults and the most recent results."""

    def __init__(self, config: dict[str, Any]):
        """
        Initialize the committee machine manager.

        Args:
            config: Mount configuration with optional data_dir, numerics and workers
        """
        self.config = config
        data_dir = Path(config["data_dir"]).expanduser() if config.get("data_dir") else get_committee_data_directory()
        self.storage = ResultStorage(data_dir)
        self.numerics = NumericsConfig.from_dict(config.get("numerics") or {})
        self.workers = int(config.get("workers", 1))
        self.last_rows: list[ResultRow] = []

    async def start(self):
        """Start the manager and initialize resources."""
        logger.info(f"Starting Committee Machine manager (results in {self.storage.data_dir})")

    async def stop(self):
        """Stop the manager and clean up resources."""
        logger.info("Stopping Committee Machine manager")

    def sweep_config(self, **fields: Any) -> SweepConfig:
        """Build a SweepConfig carrying the manager's numerics and worker count."""
        data = {"numerics": self.numerics.to_dict(), "workers": self.workers}
        data.update({k: v for k, v in fields.items() if v is not None})
        return SweepConfig.from_dict(data)

    async def run_sweep(self, config: SweepConfig, save: bool = False) -> SweepResult:
        """Run a sweep in a worker thread, optionally writing its result file."""
        result = await asyncio.to_thread(run_sweep, config, self.storage if save else None)
        self.last_rows = result.rows
        return result

    async def run_in_thread(self, func: Callable[..., T], *args: Any, **kwargs: Any) -> T:
        """Run a blocking computation without stalling the event loop."""
        return await asyncio.to_thread(func, *args, **kwargs)
