"""CSV ingestion for participant datasets.

A dataset is a table of finite numbers, one row per record. A header row is
auto-detected: if no cell of the first non-blank line parses as a number,
the line is treated as column names and skipped. Any other unparsable cell
is an error located by row and column (1-based, counted over the file).
"""

from __future__ import annotations

import csv
import math

import numpy as np

from ..errors import EmptyDataset, ParseError


def load_dataset_csv(path: str) -> np.ndarray:
    """Load a CSV file into a (rows, columns) float64 array."""
    with open(path, newline="", encoding="utf-8") as fh:
        raw = [(lineno, row) for lineno, row in enumerate(csv.reader(fh), start=1)]
    rows = [(lineno, row) for lineno, row in raw if any(c.strip() for c in row)]
    if not rows:
        raise EmptyDataset(f"{path} contains no data rows")

    first_lineno, first_row = rows[0]
    if _is_header(first_row):
        rows = rows[1:]
        if not rows:
            raise EmptyDataset(f"{path} contains a header but no data rows")

    width = len(rows[0][1])
    data = np.empty((len(rows), width), dtype=np.float64)
    for i, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise ParseError(
                f"row {lineno} has {len(row)} cells, expected {width}",
                row=lineno,
                column=min(len(row), width) + 1,
            )
        for j, cell in enumerate(row, start=1):
            data[i, j - 1] = _parse_cell(cell, lineno, j)
    return data


def _parse_cell(cell: str, lineno: int, column: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(
            f"cell {cell.strip()!r} is not a number",
            row=lineno,
            column=column,
        ) from None
    if not math.isfinite(value):
        raise ParseError(
            f"cell {cell.strip()!r} is not finite",
            row=lineno,
            column=column,
        )
    return value


def _is_header(row) -> bool:
    """A row is a header only if none of its cells parses as a number."""
    for cell in row:
        try:
            float(cell)
        except ValueError:
            continue
        return False
    return True
