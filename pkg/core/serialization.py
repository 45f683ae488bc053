"""
Deterministic JSON and CSV output.

Reports carry a schema version and floats rounded to JSON_DIGITS significant
digits, so identical runs produce byte-identical files.
"""

import csv
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from core.config import settings
from core.entropic_ot import CouplingSolution
from core.finite_free import MonicPoly
from core.measures import DiscreteMeasure


def format_float(x: float) -> str:
    return f"{x:.{settings.JSON_DIGITS}g}"


def format_cell(x: float) -> str:
    """Shortest text that reads back as the same float."""
    if not math.isfinite(x):
        return format_float(x)
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def _round(x: float) -> float | None:
    if not math.isfinite(x):
        return None
    return float(format_float(x))


def to_jsonable(obj: Any) -> Any:
    """Convert numpy, dataclass and enum values into plain JSON types."""
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _round(obj.real), "im": _round(obj.imag)}
    if isinstance(obj, np.ndarray):
        return [to_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, DiscreteMeasure):
        return {"atoms": to_jsonable(obj.atoms), "weights": to_jsonable(obj.weights)}
    if isinstance(obj, MonicPoly):
        return {"coeffs": to_jsonable(obj.float_coeffs)}
    if isinstance(obj, CouplingSolution):
        return coupling_to_dict(obj)
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    return obj


def _axis_labels(sol: CouplingSolution) -> list[np.ndarray]:
    if sol.atoms:
        return list(sol.atoms)
    return [np.arange(n, dtype=np.float64) for n in sol.pi.shape]


def coupling_to_dict(sol: CouplingSolution) -> dict:
    """
    Two-marginal couplings export as {rows, cols, pi, value, a, b}, with pi
    row-major. Multi-marginal ones list every axis under "atoms" and every
    scaling under "potentials".
    """
    labels = _axis_labels(sol)
    if sol.arity == 2:
        return {
            "rows": to_jsonable(labels[0]),
            "cols": to_jsonable(labels[1]),
            "pi": to_jsonable(sol.pi),
            "value": to_jsonable(sol.value),
            "a": to_jsonable(sol.potentials[0]),
            "b": to_jsonable(sol.potentials[1]),
        }
    return {
        "atoms": [to_jsonable(x) for x in labels],
        "pi": to_jsonable(sol.pi),
        "value": to_jsonable(sol.value),
        "potentials": [to_jsonable(p) for p in sol.potentials],
    }


def coupling_table(sol: CouplingSolution) -> list[dict]:
    """One record per cell of the plan, for heatmaps."""
    labels = _axis_labels(sol)
    names = ["row", "col"] if sol.arity == 2 else [f"x{j + 1}" for j in range(sol.arity)]
    table = []
    for idx, p in np.ndenumerate(sol.pi):
        record = {name: float(labels[j][i]) for j, (name, i) in enumerate(zip(names, idx))}
        record["pi"] = float(p)
        table.append(record)
    return table


def dumps_report(payload: dict) -> str:
    """Schema-tagged JSON with keys kept in insertion order."""
    report = {"schema": settings.JSON_SCHEMA_VERSION}
    report.update(to_jsonable(payload))
    return json.dumps(report, indent=2, ensure_ascii=False) + "\n"


def write_csv(
    target: str | Path | TextIO, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> None:
    def cell(value: Any) -> Any:
        if isinstance(value, (float, np.floating)):
            return format_cell(float(value))
        return value

    def emit(stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell(v) for v in row])

    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as f:
            emit(f)
    else:
        emit(target)
