"""Study reports and their CSV/JSON emission.

Numeric fields are written with 17 significant digits, which round-trips
float64 exactly: re-reading the JSON mirror reproduces every float bit for
bit.  Wall-clock time is kept on the in-memory report (and logged) but is
never written to the output files, so identical config + seed gives
byte-identical CSV and JSON.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__


@dataclass(frozen=True)
class CriterionResult:
    """One named pass/fail check with its tolerance and observed value."""

    name: str
    tolerance: float
    observed: float
    passed: bool
    note: str = ""


@dataclass(eq=False)
class StudyReport:
    study: str
    config_echo: dict
    rows: list = field(default_factory=list)
    criteria: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def versions(self) -> dict:
        return {
            "conelab": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        }


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, np.ndarray):
        return ";".join(f"{float(v):.17g}" for v in value.ravel())
    return str(value)


def _jsonable(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def emit(report: StudyReport, out_dir: str | Path, formats=("csv", "json")) -> list[Path]:
    """Write the report; returns the created paths.

    CSV columns are the union of row keys in first-seen order.  The JSON
    mirror carries the config echo, version stamp, per-criterion results,
    and the same rows.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = []
    if "csv" in formats:
        path = out / f"{report.study}.csv"
        columns: list[str] = []
        for row in report.rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
        try:
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(columns)
                for row in report.rows:
                    writer.writerow([_fmt(row.get(c, "")) for c in columns])
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        paths.append(path)
    if "json" in formats:
        path = out / f"{report.study}.json"
        payload = {
            "study": report.study,
            "passed": report.passed,
            "config": _jsonable(report.config_echo),
            "versions": report.versions(),
            "criteria": [
                {
                    "name": c.name,
                    "tolerance": c.tolerance,
                    "observed": c.observed,
                    "passed": c.passed,
                    "note": c.note,
                }
                for c in report.criteria
            ],
            "rows": [_jsonable(r) for r in report.rows],
        }
        try:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1)
                fh.write("\n")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        paths.append(path)
    return paths


def summary_line(report: StudyReport, paths: list[Path]) -> str:
    """Single-line machine-readable summary for standard output."""
    return json.dumps(
        {
            "study": report.study,
            "passed": report.passed,
            "criteria_total": len(report.criteria),
            "criteria_failed": [c.name for c in report.criteria if not c.passed],
            "rows": len(report.rows),
            "outputs": [str(p) for p in paths],
        },
        separators=(",", ":"),
    )
