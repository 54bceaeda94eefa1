"""
Logging utilities for t1track

Library modules log through the shared "t1track" logger. Each CLI invocation
gets its own "t1track.run.<command>" logger and log file; while a run is
active, library messages are copied into that file as well.
"""

import logging
import os
from datetime import datetime
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
BANNER_WIDTH = 80
APP_LOGGER_NAME = "t1track"

_app_logger: Optional[logging.Logger] = None


def resolve_level(level_name: Optional[str]) -> int:
    """Translate a level name such as "DEBUG" into a logging constant"""
    if not level_name:
        return logging.INFO
    return getattr(logging, str(level_name).upper(), logging.INFO)


def _file_handler(log_file: str, level: int, formatter: logging.Formatter) -> logging.FileHandler:
    log_dir = os.path.dirname(log_file)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
    handler = logging.FileHandler(log_file, encoding='utf-8')
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def setup_logger(
    name: str,
    log_file: Optional[str] = None,
    level: int = logging.INFO,
    format_str: Optional[str] = None,
    console_level: Optional[int] = None
) -> logging.Logger:
    """
    Set up a logger with a console handler and an optional file handler

    Calling it again for the same name replaces the previous handlers.

    Args:
        name: Logger name
        log_file: Path to log file (optional)
        level: Logging level of the logger and its file
        format_str: Custom format string
        console_level: Console threshold; defaults to level

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.propagate = False

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(format_str or LOG_FORMAT)

    console = logging.StreamHandler()
    console.setLevel(level if console_level is None else console_level)
    console.setFormatter(formatter)
    logger.addHandler(console)

    if log_file:
        logger.addHandler(_file_handler(log_file, level, formatter))

    return logger


def get_app_logger() -> logging.Logger:
    """Shared library logger; T1_LOG_FILE and T1_LOG_LEVEL override its defaults"""
    global _app_logger
    if _app_logger is None:
        _app_logger = setup_logger(
            name=APP_LOGGER_NAME,
            log_file=os.getenv("T1_LOG_FILE", "logs/t1track.log"),
            level=resolve_level(os.getenv("T1_LOG_LEVEL"))
        )
    return _app_logger


def get_run_logger(command: str, base_log_dir: str = "logs", level: int = logging.INFO,
                   quiet: bool = False) -> logging.Logger:
    """
    Create the logger for one CLI invocation

    The run's log file lives under base_log_dir, never in the results
    directory. Library messages logged during the run are mirrored into it.

    Args:
        command: Subcommand name (e.g. "track")
        base_log_dir: Directory for log files
        level: Logging level
        quiet: Only warnings and errors reach the console

    Returns:
        Logger instance for this run
    """
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file = os.path.join(base_log_dir, f"{command}_{timestamp}.log")
    console_level = logging.WARNING if quiet else level

    run_logger = setup_logger(
        name=f"{APP_LOGGER_NAME}.run.{command}",
        log_file=log_file,
        level=level,
        console_level=console_level
    )

    app = get_app_logger()
    for handler in list(app.handlers):
        if getattr(handler, "run_mirror", False):
            app.removeHandler(handler)
            handler.close()
    mirror = _file_handler(log_file, level, logging.Formatter(LOG_FORMAT))
    mirror.run_mirror = True
    app.addHandler(mirror)
    for handler in app.handlers:
        if type(handler) is logging.StreamHandler:
            handler.setLevel(console_level)

    return run_logger


def log_banner(logger: logging.Logger, title: str) -> None:
    """Log a title framed by separator lines"""
    logger.info("=" * BANNER_WIDTH)
    logger.info(title)
    logger.info("=" * BANNER_WIDTH)
