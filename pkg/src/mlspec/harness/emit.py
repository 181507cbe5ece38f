"""Writing run records, summaries and the run manifest."""
from __future__ import annotations

import csv
import json
import math
import os
import platform
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import scipy

from .. import __version__
from .config import ExperimentConfig
from .runners import McRecord, RunResult

SCHEMA_VERSION = "mlspec.records/1"


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def _row(rec: McRecord, columns: Sequence[str]) -> list[str]:
    merged = dict(rec.values, failed=rec.failed, error=rec.error)
    return [format_value(merged.get(col, "")) for col in columns]


def write_csv(path: str | os.PathLike, records: Iterable[McRecord], columns: Sequence[str]) -> None:
    """CSV with a header row, floats at 17 significant digits, rows by replicate."""
    rows = sorted(records, key=McRecord.sort_key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in rows:
            writer.writerow(_row(rec, columns))


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(value: Any) -> Any:
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def write_json_records(path, records: Iterable[McRecord], columns: Sequence[str]) -> None:
    rows = sorted(records, key=McRecord.sort_key)
    doc = {
        "schema": SCHEMA_VERSION,
        "columns": list(columns),
        "records": [
            _jsonable({col: dict(r.values, failed=r.failed, error=r.error).get(col) for col in columns})
            for r in rows
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")


def manifest(cfg: ExperimentConfig) -> dict[str, Any]:
    return {
        "schema": SCHEMA_VERSION,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config": json.loads(cfg.canonical_json()),
        "config_hash": cfg.config_hash(),
        "software": {
            "mlspec": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def emit(result: RunResult, path: str | os.PathLike, formats: Sequence[str] = ("csv", "json")) -> dict[str, Path]:
    """Write records, summary, timings and manifest into directory ``path``.

    Wall-clock timings go to ``timings.csv`` so that ``records.csv`` stays
    byte-identical across reruns.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    if "csv" in formats:
        written["csv"] = out / "records.csv"
        write_csv(written["csv"], result.records, result.columns)
    if "json" in formats:
        written["json"] = out / "records.json"
        write_json_records(written["json"], result.records, result.columns)
    written["summary"] = out / "summary.json"
    written["summary"].write_text(json.dumps(_jsonable(result.summary), indent=1) + "\n")
    written["timings"] = out / "timings.csv"
    with open(written["timings"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rho", "replicate", "row", "runtime_seconds"])
        for rec in sorted(result.records, key=McRecord.sort_key):
            writer.writerow([format_value(rec.values.get("rho")), rec.replicate,
                             rec.values.get("order", 0), format_value(rec.runtime)])
    written["manifest"] = out / "manifest.json"
    written["manifest"].write_text(json.dumps(manifest(result.config), indent=1, sort_keys=True) + "\n")
    return written
