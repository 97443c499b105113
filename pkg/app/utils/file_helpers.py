"""
File handling utilities.
"""
from pathlib import Path
from typing import List, Optional, Union

from app.core.constants import SCENARIO_SUFFIX

BUNDLED_SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def ensure_storage_dir(directory: Union[str, Path] = "./out") -> str:
    """
    Ensure output directory exists.

    Args:
        directory: Directory path

    Returns:
        Absolute path to directory
    """
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    return str(path.absolute())


def scenario_search_dirs(extra_dir: Optional[str] = None) -> List[Path]:
    """Directories searched for a bare scenario name, in order."""
    dirs = [Path.cwd()]
    if extra_dir:
        dirs.append(Path(extra_dir))
    dirs.append(BUNDLED_SCENARIO_DIR)
    return dirs


def list_bundled_scenarios() -> List[str]:
    return sorted(path.stem for path in BUNDLED_SCENARIO_DIR.glob(f"*{SCENARIO_SUFFIX}"))


def resolve_scenario_path(name: str, extra_dir: Optional[str] = None) -> Path:
    """
    Resolve a scenario argument to an existing file.

    A path that exists is used as given. Otherwise the name (with or without
    the .toml suffix) is looked up in the working directory, the configured
    scenario directory and the bundled scenarios.

    Args:
        name: File path or scenario name such as "mobile_robot"
        extra_dir: Additional directory to search

    Returns:
        Path to the scenario file

    Raises:
        FileNotFoundError: If no candidate exists
    """
    direct = Path(name)
    if direct.is_file():
        return direct

    file_name = name if name.endswith(SCENARIO_SUFFIX) else f"{name}{SCENARIO_SUFFIX}"
    for directory in scenario_search_dirs(extra_dir):
        candidate = directory / file_name
        if candidate.is_file():
            return candidate

    raise FileNotFoundError(f"scenario '{name}' not found (bundled: {', '.join(list_bundled_scenarios())})")
