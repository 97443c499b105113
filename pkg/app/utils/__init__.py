"""
Utility functions for the trajectory planner.
"""

from .csv_helpers import format_number, read_rows, write_rows
from .file_helpers import ensure_storage_dir, resolve_scenario_path

__all__ = [
    "format_number",
    "read_rows",
    "write_rows",
    "ensure_storage_dir",
    "resolve_scenario_path",
]
