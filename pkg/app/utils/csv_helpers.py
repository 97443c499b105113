"""
CSV utilities for planner output files.
"""
import csv
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

PathLike = Union[str, Path]


def format_number(value: float) -> str:
    """
    Format a float so that reading it back gives the same bits.

    Args:
        value: Number to format

    Returns:
        Shortest-round-trip-safe text (17 significant digits)
    """
    return format(float(value), ".17g")


def write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[float]]) -> int:
    """
    Write a numeric table with a header row.

    Args:
        path: Destination file, overwritten if present
        header: Column names
        rows: Numeric rows; each must have len(header) entries

    Returns:
        Number of data rows written

    Raises:
        ValueError: If a row has the wrong number of columns
    """
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row_num, row in enumerate(rows, start=2):
            if len(row) != len(header):
                raise ValueError(f"Row {row_num} has {len(row)} columns, expected {len(header)}")
            writer.writerow([format_number(value) for value in row])
            count += 1
    return count


def read_rows(path: PathLike) -> Tuple[List[str], np.ndarray]:
    """
    Read a numeric table written by write_rows.

    Args:
        path: Source file

    Returns:
        Tuple of (header, rows as a float array of shape (count, columns))

    Raises:
        ValueError: If the file is empty or a row is malformed
    """
    with open(path, "r", encoding="utf-8", newline="") as file:
        reader = csv.reader(file)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file")

        rows = []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}: row {row_num} has {len(row)} columns, expected {len(header)}")
            rows.append([float(value) for value in row])

    return header, np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
