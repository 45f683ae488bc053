"""Plain-text tables for terminal output."""

from collections.abc import Sequence
from typing import Any


def format_cell(value: Any, digits: int = 6) -> str:
    """
    Render one table cell.

    Args:
        value: Number, bool, None or anything with a str()
        digits: Significant digits for floats

    Returns:
        Short human-readable text
    """
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "PASS" if value else "FAIL"
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def format_table(headers: Sequence[str], rows: Sequence[Sequence[Any]], digits: int = 6) -> str:
    """
    Align columns left, separated by two spaces, with a dashed rule under the header.

    Args:
        headers: Column titles
        rows: Table body; every row has len(headers) entries
        digits: Significant digits for float cells

    Returns:
        The table as a single string without a trailing newline
    """
    body = [[format_cell(v, digits) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in body:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]

    def line(cells: Sequence[str]) -> str:
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(row) for row in body)
    return "\n".join(out)


def format_summary(passed: int, total: int) -> str:
    status = "OK" if total and passed == total else "FAILED"
    return f"{status}: {passed}/{total} checks passed"
