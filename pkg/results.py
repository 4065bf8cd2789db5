"""Result records and their files."""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from config import VERSION
from errors import ResultsIOError

logger = logging.getLogger(__name__)

RECORD_FILE = "record.json"


@dataclass
class ResultRecord:
    """Everything a run produced: config echo, outputs, tables and provenance."""

    command: str
    config: Dict[str, Any]
    status: str = "ok"
    exit_code: int = 0
    outputs: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=lambda: {"version": VERSION})
    error: Optional[Dict[str, Any]] = None
    timestamps: Optional[Dict[str, str]] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "command": self.command,
            "status": self.status,
            "exit_code": self.exit_code,
            "config": self.config,
            "outputs": self.outputs,
            "provenance": self.provenance,
            "tables": sorted(self.tables),
            "error": self.error,
        }
        if self.timestamps is not None:
            data["timestamps"] = self.timestamps
        return to_builtin(data)


def to_builtin(value: Any) -> Any:
    """Convert numpy scalars/arrays, tuples and paths into JSON builtins."""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_builtin(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def dumps_record(record: ResultRecord) -> str:
    """Deterministic JSON text: sorted keys, indent 2, floats at full precision."""
    return json.dumps(record.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_results(record: ResultRecord, output_dir: Optional[Path] = None) -> List[Path]:
    """Write record.json and one CSV per table under <output_dir>/<command>/.

    Args:
        record: Record to write
        output_dir: Base directory; defaults to the one in the record's config

    Returns:
        Paths written, record first

    Raises:
        ResultsIOError: With the offending path on any I/O failure
    """
    base = Path(output_dir if output_dir is not None else record.config.get("output_dir", "results"))
    run_dir = base / record.command
    written: List[Path] = []
    path = run_dir
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        path = run_dir / RECORD_FILE
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps_record(record))
        written.append(path)
        for name in sorted(record.tables):
            path = run_dir / f"{name}.csv"
            record.tables[name].to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
            written.append(path)
    except OSError as e:
        raise ResultsIOError(f"Could not write {path}: {e.strerror or e}", {"path": str(path)}) from e
    logger.info("results written to %s", run_dir)
    return written


def load_record(path: Path) -> ResultRecord:
    """Read a record.json (and its CSV tables) back.

    Args:
        path: record.json path or the directory holding it

    Returns:
        The reconstructed ResultRecord

    Raises:
        ResultsIOError: If the record is missing or malformed
    """
    path = Path(path)
    if path.is_dir():
        path = path / RECORD_FILE
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ResultsIOError(f"Could not read {path}: {e}", {"path": str(path)}) from e

    tables = {}
    for name in data.get("tables", []):
        table_path = path.parent / f"{name}.csv"
        try:
            tables[name] = pd.read_csv(table_path, float_precision="round_trip")
        except (OSError, pd.errors.ParserError) as e:
            raise ResultsIOError(f"Could not read {table_path}: {e}", {"path": str(table_path)}) from e

    return ResultRecord(
        command=data["command"],
        config=data["config"],
        status=data["status"],
        exit_code=data["exit_code"],
        outputs=data["outputs"],
        tables=tables,
        provenance=data["provenance"],
        error=data.get("error"),
        timestamps=data.get("timestamps"),
    )
