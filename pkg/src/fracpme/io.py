"""CSV and JSON writers with a versioned header line and deterministic formatting."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

FORMAT_VERSION = 1


def artifact_version() -> str:
    from . import __version__

    return __version__


def header_line(kind: str) -> str:
    return f"# fracpme {artifact_version()} format={FORMAT_VERSION} kind={kind}"


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        return format(x, ".17g")
    return str(value)


def write_csv(path: str | Path, kind: str, columns: list[str], rows: Iterable) -> Path:
    """Comma-separated table whose first line is ``# fracpme <version> ...``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(header_line(kind) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Inverse of :func:`write_csv` for numeric tables."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    columns = next(reader)
    data = np.array([[float(c) for c in row] for row in reader], dtype=float)
    return columns, data.reshape(-1, len(columns))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_manifest(directory: str | Path, stage: str, config_hash: str, tolerances: dict, extra: dict | None = None) -> Path:
    """``manifest.json`` describing how a stage directory was produced."""
    body = {
        "stage": stage,
        "artifact_version": artifact_version(),
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "tolerances": tolerances,
    }
    if extra:
        body.update(extra)
    return write_json(Path(directory) / "manifest.json", body)


def series_rows(times: np.ndarray, points: np.ndarray, slices: np.ndarray, index: np.ndarray | None = None):
    """Long-format rows ``(t, index, x..., value)``."""
    index = np.arange(slices.shape[1]) if index is None else np.asarray(index)
    for k, t in enumerate(times):
        for j, i in enumerate(index):
            yield (t, int(i), *points[j], slices[k, j])
