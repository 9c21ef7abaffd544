"""Unified logging utility for the CLI, scripts and library code.

Logs always go to standard error; data goes to files only. When
CONTLEX_LOG_TO_FILE is enabled, the same records are also appended to a daily
rotating log file under LOG_DIR.
"""
import logging
import logging.handlers
import sys
from datetime import datetime

import pytz

from app.config import LOG_DIR, LOG_FILE_NAME, LOG_LEVEL, LOG_TIMEZONE, LOG_TO_FILE

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class TZFormatter(logging.Formatter):
    """Formatter that renders timestamps in a configurable timezone."""
    def __init__(self, fmt=None, datefmt=None, tz_name: str = LOG_TIMEZONE):
        super().__init__(fmt, datefmt)
        self.tz = pytz.timezone(tz_name)

    def formatTime(self, record, datefmt=None):
        """Format time in the configured timezone."""
        ct = datetime.fromtimestamp(record.created, tz=self.tz)
        if datefmt:
            return ct.strftime(datefmt)
        t = ct.strftime("%Y-%m-%d %H:%M:%S")
        return f"{t} {ct.tzname()}"


def _file_handler() -> logging.Handler:
    LOG_DIR.mkdir(parents=True, exist_ok=True)
    handler = logging.handlers.TimedRotatingFileHandler(
        LOG_DIR / LOG_FILE_NAME,
        when='midnight',
        interval=1,
        backupCount=30,  # Keep 30 days of logs
        encoding='utf-8'
    )
    handler.setFormatter(TZFormatter(LOG_FORMAT))

    # Flush after every record so long training runs can be followed live
    original_emit = handler.emit

    def emit_with_flush(record):
        original_emit(record)
        if handler.stream and hasattr(handler.stream, 'flush'):
            handler.stream.flush()
    handler.emit = emit_with_flush
    return handler


def _console_handler() -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(TZFormatter(LOG_FORMAT))
    return handler


def setup_logging(level: str = LOG_LEVEL, to_file: bool = LOG_TO_FILE) -> logging.Logger:
    """Configure the root logger once for the command-line entry point.

    Args:
        level: Logging level name (default from CONTLEX_LOG_LEVEL)
        to_file: Also write to the rotating log file

    Returns:
        The configured root logger
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    # Don't add handlers twice (e.g. when grid workers re-enter the entry point)
    if not root_logger.handlers:
        root_logger.addHandler(_console_handler())
        if to_file:
            root_logger.addHandler(_file_handler())
    return root_logger


def setup_script_logger(name: str = "script") -> logging.Logger:
    """Setup a logger for standalone scripts.

    Reuses the root file handler when the entry point already created one, so
    script output lands in the same log file.

    Args:
        name: Logger name (default: "script")

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    if logger.handlers:
        return logger

    logger.setLevel(LOG_LEVEL)

    file_handler = None
    for handler in logging.getLogger().handlers:
        if isinstance(handler, logging.handlers.TimedRotatingFileHandler):
            file_handler = handler
            break
    if file_handler is None and LOG_TO_FILE:
        file_handler = _file_handler()
    if file_handler is not None:
        logger.addHandler(file_handler)

    logger.addHandler(_console_handler())

    # Prevent propagation to root logger to avoid duplicate logs
    logger.propagate = False
    return logger
