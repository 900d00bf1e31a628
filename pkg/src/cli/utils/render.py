"""
Rendering utilities for simulation output.
Writes trajectories as CSV and reports as JSON, and prints short summaries.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from rich.console import Console
from rich.table import Table

from src.models.trajectory import Trajectory
from src.utils.json_utils import dump_json, validate_against_schema

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["rep", "time", "state"]


def encode_state(state: Any) -> Any:
    """JSON-ready form of a simulator state."""
    if hasattr(state, "to_dict"):
        return state.to_dict()
    if isinstance(state, np.ndarray):
        return state.tolist()
    if isinstance(state, (tuple, list)):
        return [encode_state(s) for s in state]
    if isinstance(state, np.generic):
        return state.item()
    return state


def trajectory_rows(trajectories: Sequence[Trajectory]) -> List[List[Any]]:
    """(rep, time, state) rows sorted by rep, then time."""
    rows = []
    for rep, traj in enumerate(trajectories):
        for t, state in zip(traj.times, traj.states):
            rows.append([rep, float(t), json.dumps(encode_state(state), separators=(",", ":"))])
    rows.sort(key=lambda row: (row[0], row[1]))
    return rows


def write_trajectories_csv(path: Union[str, Path], trajectories: Sequence[Trajectory]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = trajectory_rows(trajectories)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_HEADER)
        for rep, t, state in rows:
            writer.writerow([rep, repr(t), state])
    logger.debug(f"Wrote {len(rows)} rows for {len(trajectories)} trajectories to {path}")
    return path


def read_trajectories_csv(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Parse a trajectory CSV back into {rep, time, state} dicts."""
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        return [
            {"rep": int(row["rep"]), "time": float(row["time"]), "state": json.loads(row["state"])}
            for row in reader
        ]


def write_report(path: Union[str, Path], data: Dict[str, Any], schema_type: Optional[str] = None) -> Path:
    """Check data against schemas/<schema_type> when given, then write it as JSON."""
    if schema_type:
        validate_against_schema(data, schema_type)
    dump_json(data, path)
    logger.debug(f"Wrote {schema_type or 'JSON'} report to {path}")
    return Path(path)


def render_report(data: Dict[str, Any], schema_type: Optional[str] = None) -> str:
    if schema_type:
        validate_against_schema(data, schema_type)
    return json.dumps(data, indent=2)


def print_summary(console: Console, title: str, rows: Iterable[Sequence[Any]], columns: Sequence[str]) -> None:
    table = Table(title=title)
    for column in columns:
        table.add_column(column)
    for row in rows:
        table.add_row(*(str(cell) for cell in row))
    console.print(table)


def trajectory_summary(trajectories: Sequence[Trajectory], flags: Sequence[str]) -> List[List[Any]]:
    """One row per meta flag: how many runs raised it."""
    return [[flag, sum(bool(traj.meta.get(flag)) for traj in trajectories)] for flag in flags]
