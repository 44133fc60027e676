"""Output directory layout and input file lookup."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

from ..errors import ValidationError

logger = logging.getLogger(__name__)

INPUT_DIR = Path("workspace/input")


def prepare_output_dir(outdir: Union[str, Path], command: str, config_hash: str) -> Path:
    """Create ``<outdir>/<command>/<config-hash>/`` and return it.

    Raises:
        ValidationError: If the directory cannot be created
    """
    target = Path(outdir) / command / config_hash
    try:
        target.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"Cannot create output directory {target}: {exc}") from exc
    logger.debug("output_dir | path=%s", target)
    return target


def resolve_input(path: Optional[Union[str, Path]], what: str,
                  search_dirs: Sequence[Union[str, Path]] = (INPUT_DIR,)) -> Path:
    """Find an input file, trying the path as given and then by name in ``search_dirs``.

    Args:
        path: Path from the configuration or command line
        what: Human readable name used in error messages ("dataset", "params")
        search_dirs: Extra directories to look in

    Returns:
        The first existing candidate

    Raises:
        ValidationError: If no path was given or none of the candidates exists
    """
    if not path:
        raise ValidationError(f"Required input '{what}' is missing or empty")
    given = Path(path)
    possible_paths = [given]
    for directory in search_dirs:
        possible_paths.append(Path(directory) / given)
        possible_paths.append(Path(directory) / given.name)
    for candidate in possible_paths:
        if candidate.is_file():
            return candidate
    raise ValidationError(f"Input {what} file not found: {given}")


def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    """Write ``payload`` as sorted, indented JSON with a trailing newline."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"Cannot write {path}: {exc}") from exc
    return path
