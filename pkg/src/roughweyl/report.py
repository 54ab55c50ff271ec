"""CSV and JSON output for sweeps and checks."""
from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np
import scipy

from .sweep import CSV_COLUMNS, ExponentReport


def environment_stamp() -> dict:
    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "package": __version__}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload: dict) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(_clean(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_records_csv(path, records) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in records:
                w.writerow(r.row())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_report(records, report: ExponentReport | None, csv_path=None, json_path=None,
                config_echo: dict | None = None, extra: dict | None = None) -> dict:
    """Write the per-record CSV and the JSON summary; returns the summary."""
    summary = {
        "status": "empty" if not records else "ok",
        "config": config_echo or {},
        "records": len(records),
        "report": report.to_dict() if report is not None else None,
        "environment": environment_stamp(),
    }
    if extra:
        summary.update(extra)
    if csv_path is not None:
        write_records_csv(csv_path, records)
    if json_path is not None:
        write_json(json_path, summary)
    return summary
