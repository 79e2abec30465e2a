"""
Logging utilities for the THERGM toolkit.

One call to ``setup_logger`` per process configures the root logger;
modules then log through ``logging.getLogger(__name__)``.
"""

import logging
import logging.handlers
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Union

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
MAX_LOG_BYTES = 10 * 1024 * 1024
LOG_BACKUPS = 5


def log_file_path(log_dir: Union[str, Path], prefix: str = "thergm") -> Path:
    """Timestamped log file inside ``log_dir`` (created when missing)."""
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir / f"{prefix}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"


def setup_logger(level: int = logging.INFO, log_to_file: bool = True,
                 log_dir: Union[str, Path] = "logs") -> Optional[Path]:
    """
    Configure the root logger for a command run.

    Args:
        level: Logging level (default: INFO)
        log_to_file: Also write a rotating log file under ``log_dir``
        log_dir: Directory receiving the log file

    Returns:
        Path of the log file, or None when logging to the console only
    """
    # console output goes to stderr
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    log_file = log_file_path(log_dir) if log_to_file else None
    if log_file is not None:
        handlers.append(logging.handlers.RotatingFileHandler(
            log_file, maxBytes=MAX_LOG_BYTES, backupCount=LOG_BACKUPS, encoding="utf-8"))

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        if isinstance(handler, logging.FileHandler):
            handler.close()
    root_logger.setLevel(level)
    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(formatter)
        root_logger.addHandler(handler)

    logger = logging.getLogger(__name__)
    logger.debug(f"Logging at level {logging.getLevelName(level)}")
    if log_file is not None:
        logger.info(f"Log file: {log_file}")
    return log_file
