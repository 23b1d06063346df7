"""
Logging Configuration

One shared ``logger`` for the whole testbed. Runs write full detail to
``<LOG_DIR>/testbed.log`` and a short form to stdout; ``--log-level`` on the
command line moves the console threshold without touching the log file.
"""

import logging
import sys
from pathlib import Path

from ..config import settings

LOGGER_NAME = "novelty_testbed"
LOG_FILE = "testbed.log"


def _level(name: str, default: int = logging.INFO) -> int:
    level = logging.getLevelName(name.upper())
    return level if isinstance(level, int) else default


def setup_logger(name: str = LOGGER_NAME, level: int = logging.INFO, log_dir: str = settings.log_dir) -> logging.Logger:
    """
    Build the named logger with a DEBUG file handler and a console handler at ``level``.

    Calling it again returns the existing logger unchanged.
    """
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger
    logger.setLevel(logging.DEBUG)

    directory = Path(log_dir)
    directory.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(directory / LOG_FILE)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    ))

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    return logger


def set_level(level_name: str) -> None:
    """Set the console threshold by name (e.g. "DEBUG"); unknown names keep the current one."""
    level = _level(level_name, default=-1)
    if level < 0:
        logger.warning(f"Unknown log level {level_name!r}; keeping the current one")
        return
    for handler in logger.handlers:
        if not isinstance(handler, logging.FileHandler):
            handler.setLevel(level)


logger = setup_logger(level=_level(settings.log_level))
