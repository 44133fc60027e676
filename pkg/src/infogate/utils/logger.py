"""Logging setup shared by the command-line entry point."""

import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def setup_logging(level: str = "INFO", outdir: Optional[Union[str, Path]] = None,
                  command: str = "infogate") -> Optional[Path]:
    """Configure the ``infogate`` logger with a console handler and, when
    ``outdir`` is given, a timestamped log file under ``<outdir>/logs/``.

    Returns:
        Path of the log file, or None when only the console is used
    """
    root = logging.getLogger("infogate")
    root.setLevel(level)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.propagate = False

    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root.addHandler(console)

    if outdir is None:
        return None
    log_dir = Path(outdir) / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    log_file = log_dir / f"{command}-{timestamp}.log"
    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(file_handler)
    return log_file
