"""
Utility functions for formatting numbers and writing report files.

All files are UTF-8 with LF line endings and '.' as decimal separator.
Column orders are fixed; see docs/output-formats.md.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

logger = logging.getLogger(__name__)

QFUNCTION_COLUMNS = ["lambda", "q", "z", "s_min_eig", "s_max_eig"]


def format_number(value) -> str:
    """
    Format a number for CSV output.

    Examples:
        0.1 -> "0.1"
        1/3 -> "0.3333333333"
        inf -> "+inf"
        nan -> "nan"
    """
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return f"{v:.10g}"


def to_jsonable(obj):
    """
    Convert a report tree to plain JSON values.

    Floats are rounded to 10 significant digits, infinities become the
    strings "+inf"/"-inf" and NaN becomes null.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "+inf" if v > 0 else "-inf"
        return float(f"{v:.10g}")
    return obj


def trajectory_columns(n: int, m: int, n_barriers: int, shape_size: int = 0) -> List[str]:
    cols = ["t"] + [f"x_{i}" for i in range(n)] + [f"u_{i}" for i in range(m)] + ["delta"]
    cols += [f"lambda_{i}" for i in range(n_barriers + 1)]
    cols += [f"h_{i + 1}" for i in range(n_barriers)]
    cols += ["region", "vbar"]
    cols += [f"pi_{i}" for i in range(shape_size)]
    return cols


def trajectory_rows(traj) -> Iterable[list]:
    for k, t in enumerate(traj.times):
        row = [format_number(t)]
        row += [format_number(v) for v in traj.states[k]]
        row += [format_number(v) for v in traj.controls[k]]
        row.append(format_number(traj.deltas[k]))
        row += [format_number(v) for v in traj.multipliers[k]]
        row += [format_number(v) for v in traj.h_values[k]]
        row.append(traj.regions[k])
        row.append(format_number(traj.vbar_values[k]))
        if traj.shapes is not None:
            row += [format_number(v) for v in traj.shapes[k]]
        yield row


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise OSError(f"Cannot write {path}: {e}") from e


def write_trajectory(path: Path, traj) -> None:
    n = traj.states.shape[1]
    shape_size = 0 if traj.shapes is None else traj.shapes.shape[1]
    header = trajectory_columns(n, traj.controls.shape[1], traj.h_values.shape[1], shape_size)
    _write_csv(path, header, trajectory_rows(traj))


def write_equilibria(path: Path, points, n: int) -> None:
    header = ["lambda_e"] + [f"x_{i}" for i in range(n)] + ["verdict", "verified", "field_residual", "s_max_eig", "jac_max_real"]
    rows = []
    for pt in points:
        rows.append(
            [format_number(pt.lambda_e)]
            + [format_number(v) for v in pt.x_e]
            + [pt.verdict, "true" if pt.verified else "false"]
            + [format_number(pt.field_residual), format_number(pt.s_max_eig), format_number(pt.jac_max_real)]
        )
    _write_csv(path, header, rows)


def write_qfunction(path: Path, rows: Sequence[dict]) -> None:
    _write_csv(path, QFUNCTION_COLUMNS, ([format_number(r[c]) for c in QFUNCTION_COLUMNS] for r in rows))


def emit(report, out_dir) -> List[Path]:
    """
    Write report.json and the per-barrier and per-trajectory CSV files.

    Args:
        report: Report from the report service
        out_dir: Output directory, created when missing

    Returns:
        Paths written, report.json first

    Raises:
        OSError: If a file cannot be written; the message names the path
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"Cannot create output directory {out}: {e}") from e

    written = []
    path = out / "report.json"
    try:
        path.write_text(
            json.dumps(to_jsonable(report.data), sort_keys=True, indent=2, allow_nan=False) + "\n",
            encoding="utf-8",
            newline="\n",
        )
    except OSError as e:
        raise OSError(f"Cannot write {path}: {e}") from e
    written.append(path)

    for ba in report.barriers:
        n = ba.barrier.dim
        eq_path = out / f"equilibria_{ba.index + 1}.csv"
        write_equilibria(eq_path, ba.equilibria, n)
        q_path = out / f"qfunction_{ba.index + 1}.csv"
        write_qfunction(q_path, ba.qfunction_rows)
        written += [eq_path, q_path]

    runs = [("trajectory", report.trajectories)] + list(report.extra_runs.items())
    for prefix, trajs in runs:
        for k, traj in enumerate(trajs):
            t_path = out / f"{prefix}_{k:03d}.csv"
            write_trajectory(t_path, traj)
            written.append(t_path)

    logger.info(f"✅ Wrote {len(written)} files to {out}")
    return written


__all__ = [
    "QFUNCTION_COLUMNS",
    "format_number",
    "to_jsonable",
    "trajectory_columns",
    "emit",
]
