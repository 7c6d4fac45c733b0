"""
Persistence layer for result files and instance descriptors.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Optional

from .models import RESULT_COLUMNS, InstanceSpec, ResultRow

logger = logging.getLogger(__name__)

FORMATS = ("csv", "jsonl")


def _format_value(value: Any) -> str:
    """CSV cell text; None is an empty cell and floats keep full precision."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _parse_value(text: str) -> Any:
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


class ResultStorage:
    """
    Handles writing result rows and instance descriptors to disk.

    Example:
        storage = ResultStorage("./data")
        path = storage.write_rows(rows, "se_k2.csv")
        rows = storage.read_rows(path)
    """

    def __init__(self, data_dir: str | Path):
        """
        Initialize storage.

        Args:
            data_dir: Directory for relative result paths and instance files
        """
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._instances_dir = self.data_dir / "instances"

    def resolve(self, path: str | Path) -> Path:
        """Relative paths live under data_dir."""
        path = Path(path)
        return path if path.is_absolute() else self.data_dir / path

    def write_rows(self, rows: Iterable[ResultRow], path: str | Path, fmt: Optional[str] = None) -> Path:
        """
        Write rows in column order.

        Args:
            rows: Result rows, written in the given order
            path: Output file (relative to data_dir unless absolute)
            fmt: "csv" or "jsonl"; inferred from the suffix when omitted

        Returns:
            Path of the written file
        """
        target = self.resolve(path)
        fmt = fmt or ("jsonl" if target.suffix == ".jsonl" else "csv")
        if fmt not in FORMATS:
            raise ValueError(f"unknown result format '{fmt}'")
        target.parent.mkdir(parents=True, exist_ok=True)
        rows = list(rows)

        if fmt == "csv":
            with open(target, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
                writer.writerow(RESULT_COLUMNS)
                for row in rows:
                    writer.writerow([_format_value(v) for v in row.to_dict().values()])
        else:
            with open(target, "w", encoding="utf-8", newline="\n") as f:
                for row in rows:
                    record = {k: _json_value(v) for k, v in row.to_dict().items()}
                    f.write(json.dumps(record, sort_keys=True) + "\n")

        logger.info(f"Wrote {len(rows)} rows to {target}")
        return target

    def read_rows(self, path: str | Path) -> list[dict[str, Any]]:
        """Parse a result file back into dictionaries keyed by column name."""
        target = self.resolve(path)
        with open(target, "r", encoding="utf-8", newline="") as f:
            if target.suffix == ".jsonl":
                return [json.loads(line) for line in f if line.strip()]
            reader = csv.reader(f)
            header = next(reader)
            return [dict(zip(header, (_parse_value(cell) for cell in record))) for record in reader]

    def list_results(self) -> list[Path]:
        """List result files stored under data_dir."""
        return sorted(p for p in self.data_dir.rglob("*") if p.suffix in (".csv", ".jsonl"))

    def save_instance(self, spec: InstanceSpec, name: Optional[str] = None) -> Path:
        """
        Save an instance descriptor; matrices are regenerated from it, never stored.

        Returns:
            Path to the descriptor file
        """
        self._instances_dir.mkdir(parents=True, exist_ok=True)
        name = name or f"instance_n{spec.n}_m{spec.m}_k{spec.K}_seed{spec.seed}.json"
        target = self._instances_dir / name
        with open(target, "w", encoding="utf-8") as f:
            json.dump(spec.to_dict(), f, indent=2)
        return target

    def load_instance(self, path: str | Path) -> InstanceSpec:
        """Load an instance descriptor."""
        path = Path(path)
        if not path.is_absolute() and not path.exists():
            path = self._instances_dir / path
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return InstanceSpec.from_dict(data)

    def list_instances(self) -> list[Path]:
        """List stored instance descriptors."""
        if not self._instances_dir.exists():
            return []
        return sorted(self._instances_dir.glob("*.json"))
