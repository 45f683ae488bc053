"""Measure input: named presets, JSON files and stdin."""

import json
import logging
import sys
from pathlib import Path
from typing import TextIO

import numpy as np

from core.errors import DomainError
from core.measures import DiscreteMeasure, make_measure

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent.parent / "data"


def _floats(spec: str, args: str, count: int) -> list[float]:
    parts = [p for p in args.split(",") if p.strip()]
    if len(parts) != count:
        raise DomainError(f"preset {spec!r} expects {count} comma-separated numbers")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise DomainError(f"preset {spec!r} has a non-numeric argument")


def _two_point(spec: str, args: str) -> DiscreteMeasure:
    a, b, w = _floats(spec, args, 3)
    if not 0.0 < w < 1.0:
        raise DomainError(f"two-point weight w={w} must lie in (0, 1)")
    return make_measure([a, b], [w, 1.0 - w])


def _uniform_grid(spec: str, args: str) -> DiscreteMeasure:
    n, lo, hi = _floats(spec, args, 3)
    if n < 1 or n != int(n):
        raise DomainError(f"uniform-grid size n={n} must be a positive integer")
    if int(n) > 1 and not hi > lo:
        raise DomainError(f"uniform-grid needs lo < hi, got lo={lo}, hi={hi}")
    return make_measure(np.linspace(lo, hi, int(n)))


PRESETS = {
    "bern": lambda: make_measure([-1.0, 1.0]),
    "delta1": lambda: make_measure([1.0]),
    "positive-two-point": lambda: make_measure([1.0, 2.0]),
}

PARAMETRIC_PRESETS = {
    "delta": lambda spec, args: make_measure(_floats(spec, args, 1)),
    "two-point": _two_point,
    "uniform-grid": _uniform_grid,
}


def measure_from_dict(data: dict) -> DiscreteMeasure:
    """Build a measure from {"atoms": [...], "weights": [...]}; weights are optional."""
    if not isinstance(data, dict) or "atoms" not in data:
        raise DomainError('measure JSON must be an object with an "atoms" list')
    return make_measure(data["atoms"], data.get("weights"))


def measure_to_dict(m: DiscreteMeasure) -> dict:
    return {"atoms": m.atoms.tolist(), "weights": m.weights.tolist()}


def load_json_data(path: str | Path, stdin: TextIO | None = None) -> dict | list:
    """Loads JSON from a file, from stdin when path is "-", or from the data directory."""
    try:
        if str(path) == "-":
            return json.load(stdin or sys.stdin)
        candidate = Path(path)
        if not candidate.exists() and (DATA_DIR / candidate).exists():
            candidate = DATA_DIR / candidate
        with open(candidate, "r") as f:
            return json.load(f)
    except FileNotFoundError:
        logger.error(f"Measure file not found: {path}")
        raise DomainError(f"no preset or file named {str(path)!r}")
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON in {path}: {e}")
        raise DomainError(f"invalid measure JSON in {str(path)!r}: {e.msg}")


def load_measure(spec: str, stdin: TextIO | None = None) -> DiscreteMeasure:
    """
    Resolve a measure argument.

    Args:
        spec: A preset name (bern, delta1, positive-two-point), a parametric
            preset (delta:c, two-point:a,b,w, uniform-grid:n,lo,hi), "-" for
            stdin, or a path to a measure JSON file
        stdin: Stream used for "-" (defaults to sys.stdin)

    Returns:
        The parsed DiscreteMeasure
    """
    if spec in PRESETS:
        return PRESETS[spec]()
    name, sep, args = spec.partition(":")
    if sep and name in PARAMETRIC_PRESETS:
        return PARAMETRIC_PRESETS[name](spec, args)
    return measure_from_dict(load_json_data(spec, stdin=stdin))
